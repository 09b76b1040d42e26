//! Makeham survival, cohort masses, the support ratio and the annuity factor.
//!
//! In the constant-growth model the support ratio `Λ = Θ(t)/Σ(t)` is a
//! number. With a baby-boom shock the entrant density is piecewise
//! (exponential, logistic, exponential) and `Λ(t)` becomes a function of time,
//! tabulated once on a 0.1-year grid and interpolated with a monotone cubic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{breakpoints, Quadrature};
use crate::scenario::{BabyBoomParams, DemographyParams};

/// Grid step of the tabulated baby-boom support ratio (years).
pub const SUPPORT_GRID_STEP: f64 = 0.1;

const BOOM_ABS_TOL: f64 = 1e-9;

fn makeham_exponent(x: f64, demo: &DemographyParams) -> f64 {
    demo.makeham_a * (x - demo.a) + demo.makeham_b / demo.c.ln() * (demo.c.powf(x) - demo.c.powf(demo.a))
}

pub(crate) fn survival_unchecked(x: f64, demo: &DemographyParams) -> f64 {
    (-makeham_exponent(x, demo)).exp()
}

/// Probability that an entrant alive at age `a` is alive at age `x`.
pub fn survival(x: f64, demo: &DemographyParams) -> Result<f64> {
    if !(x >= demo.a) {
        return Err(Error::domain(format!("survival requested at age {x} below entry age {}", demo.a)));
    }
    Ok(survival_unchecked(x, demo))
}

/// Cohort mass between ages `lo` and `hi` per unit of current entrant
/// density, under constant growth `rho`.
pub fn lambda_segment(lo: f64, hi: f64, demo: &DemographyParams) -> Result<f64> {
    if !(demo.a <= lo && lo <= hi && hi <= demo.omega) {
        return Err(Error::domain(format!(
            "lambda_segment bounds [{lo}, {hi}] outside [{}, {}] or reversed",
            demo.a, demo.omega
        )));
    }
    Ok(mass_with_growth(lo, hi, demo.rho, demo))
}

fn mass_with_growth(lo: f64, hi: f64, rho: f64, demo: &DemographyParams) -> f64 {
    let q = Quadrature::default();
    q.integrate(|u| (-rho * (u - demo.a) - makeham_exponent(u, demo)).exp(), lo, hi)
}

/// Workers per retiree, `Λ(a,τ)/Λ(τ,ω)`, under constant growth `rho`.
pub fn support_ratio(demo: &DemographyParams) -> f64 {
    support_ratio_with_growth(demo.rho, demo)
}

pub(crate) fn support_ratio_with_growth(rho: f64, demo: &DemographyParams) -> f64 {
    mass_with_growth(demo.a, demo.tau, rho, demo) / mass_with_growth(demo.tau, demo.omega, rho, demo)
}

/// Expected present value at retirement of one unit of lifetime income.
///
/// Integrated on `[0, ∞)`; the upper limit is pushed out until the integrand
/// drops below `1e-16`.
pub fn annuity_factor(demo: &DemographyParams, r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::domain(format!("annuity factor needs r > 0, got {r}")));
    }
    let ln_c = demo.c.ln();
    let ctau = demo.c.powf(demo.tau);
    let integrand = move |t: f64| (-(r + demo.makeham_a) * t - demo.makeham_b / ln_c * ctau * (demo.c.powf(t) - 1.0)).exp();
    let mut upper = 1.0;
    while integrand(upper) >= 1e-16 {
        upper += 1.0;
    }
    let q = Quadrature::default();
    let pieces: Vec<f64> = (0..=upper as usize).map(|i| i as f64).collect();
    Ok(q.integrate_pieces(integrand, &pieces))
}

/// Entrant density under the baby-boom model.
pub fn bb_entrants(t: f64, bb: &BabyBoomParams) -> f64 {
    if t <= bb.t1 {
        bb.n1 * (bb.rho1 * (t - bb.t1)).exp()
    } else if t <= bb.t2 {
        logistic(t, bb)
    } else {
        logistic(bb.t2, bb) * (bb.rho2 * (t - bb.t2)).exp()
    }
}

fn logistic(t: f64, bb: &BabyBoomParams) -> f64 {
    bb.nm / (1.0 + (bb.nm / bb.n1 - 1.0) * (-bb.kappa * (t - bb.t1)).exp())
}

/// Entrant density `n(t)` for whichever demographic model is configured.
pub fn entrants(t: f64, demo: &DemographyParams) -> f64 {
    match &demo.babyboom {
        Some(bb) => bb_entrants(t, bb),
        None => demo.n0 * (demo.rho * t).exp(),
    }
}

/// `Θ(t)/Σ(t)` evaluated directly by quadrature over the piecewise entrant
/// density. Without baby-boom parameters this is the constant ratio.
pub fn bb_support_ratio_direct(t: f64, demo: &DemographyParams) -> f64 {
    let Some(bb) = &demo.babyboom else {
        return support_ratio(demo);
    };
    let q = Quadrature::with_abs_tol(BOOM_ABS_TOL * 1e-2);
    let f = |u: f64| bb_entrants(t - u + demo.a, bb) * survival_unchecked(u, demo);
    // Entry-time kinks of n(t - u + a) in age u.
    let kinks = [t - bb.t1 + demo.a, t - bb.t2 + demo.a];
    let working = q.integrate_pieces(f, &breakpoints(demo.a, demo.tau, &kinks));
    let retired = q.integrate_pieces(f, &breakpoints(demo.tau, demo.omega, &kinks));
    working / retired
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportTable {
    pub t_start: f64,
    pub step: f64,
    pub values: Vec<f64>,
    slopes: Vec<f64>,
    /// Constant value for `t <= t_start` (pre-boom growth `rho1`).
    pub before: f64,
    /// Constant value past the table (post-boom growth `rho2`).
    pub after: f64,
}

impl SupportTable {
    pub fn t_end(&self) -> f64 {
        self.t_start + self.step * (self.values.len() - 1) as f64
    }

    pub fn eval(&self, t: f64) -> f64 {
        if t <= self.t_start {
            return self.before;
        }
        if t >= self.t_end() {
            return self.after;
        }
        let pos = (t - self.t_start) / self.step;
        let i = (pos.floor() as usize).min(self.values.len() - 2);
        let s = pos - i as f64;
        let h = self.step;
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (d0, d1) = (self.slopes[i], self.slopes[i + 1]);
        let s2 = s * s;
        let s3 = s2 * s;
        (2.0 * s3 - 3.0 * s2 + 1.0) * y0
            + (s3 - 2.0 * s2 + s) * h * d0
            + (-2.0 * s3 + 3.0 * s2) * y1
            + (s3 - s2) * h * d1
    }
}

/// Fritsch–Carlson slopes for a monotone piecewise cubic Hermite interpolant.
fn pchip_slopes(values: &[f64], h: f64) -> Vec<f64> {
    let n = values.len();
    if n < 2 {
        return vec![0.0; n];
    }
    let delta: Vec<f64> = values.windows(2).map(|w| (w[1] - w[0]) / h).collect();
    let mut d = vec![0.0; n];
    d[0] = delta[0];
    d[n - 1] = delta[n - 2];
    for i in 1..n - 1 {
        if delta[i - 1] * delta[i] <= 0.0 {
            d[i] = 0.0;
        } else {
            // Equal spacing: harmonic mean of the neighbouring secants.
            d[i] = 2.0 / (1.0 / delta[i - 1] + 1.0 / delta[i]);
        }
    }
    d
}

/// Support ratio as a function of time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SupportRatioFn {
    Constant { value: f64 },
    Babyboom { table: SupportTable },
}

impl SupportRatioFn {
    pub fn new(demo: &DemographyParams) -> Self {
        let Some(bb) = &demo.babyboom else {
            return SupportRatioFn::Constant {
                value: support_ratio(demo),
            };
        };
        let t_start = bb.t1;
        let t_end = bb.t2 + demo.omega - demo.a;
        let nodes = ((t_end - t_start) / SUPPORT_GRID_STEP).ceil().max(1.0) as usize + 1;
        let step = (t_end - t_start) / (nodes - 1) as f64;
        let values: Vec<f64> = (0..nodes)
            .map(|i| bb_support_ratio_direct(t_start + step * i as f64, demo))
            .collect();
        let slopes = pchip_slopes(&values, step);
        SupportRatioFn::Babyboom {
            table: SupportTable {
                t_start,
                step,
                before: support_ratio_with_growth(bb.rho1, demo),
                after: support_ratio_with_growth(bb.rho2, demo),
                values,
                slopes,
            },
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            SupportRatioFn::Constant { value } => *value,
            SupportRatioFn::Babyboom { table } => table.eval(t),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, SupportRatioFn::Constant { .. })
    }

    /// Interval outside which `Λ(t)` is constant; `None` in constant mode.
    pub fn varying_window(&self) -> Option<(f64, f64)> {
        match self {
            SupportRatioFn::Constant { .. } => None,
            SupportRatioFn::Babyboom { table } => Some((table.t_start, table.t_end())),
        }
    }

    // Smallest and largest tabulated Λ(t).
    pub fn range(&self) -> (f64, f64) {
        match self {
            SupportRatioFn::Constant { value } => (*value, *value),
            SupportRatioFn::Babyboom { table } => table
                .values
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v))),
        }
    }
}

/// `∫_lo^hi e^{rate(s - t_ref)} ds`, stable for small `rate`.
pub(crate) fn exp_integral(lo: f64, hi: f64, rate: f64, t_ref: f64) -> f64 {
    if rate == 0.0 {
        return hi - lo;
    }
    (rate * (lo - t_ref)).exp() * (rate * (hi - lo)).exp_m1() / rate
}

// Five-point Gauss–Legendre on [-1, 1].
const GL5: [(f64, f64); 5] = [
    (0.0, 0.568_888_888_888_888_9),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (-0.906_179_845_938_664_0, 0.236_926_885_056_189_1),
    (0.906_179_845_938_664_0, 0.236_926_885_056_189_1),
];

impl SupportRatioFn {
    /// `∫_lo^hi Λ(s)·e^{rate(s - t_ref)} ds`.
    ///
    /// Constant stretches are done in closed form; inside the table each
    /// cell is a cubic times an exponential, integrated by Gauss–Legendre.
    pub fn weighted_integral(&self, lo: f64, hi: f64, rate: f64, t_ref: f64) -> f64 {
        if hi < lo {
            return -self.weighted_integral(hi, lo, rate, t_ref);
        }
        let table = match self {
            SupportRatioFn::Constant { value } => return value * exp_integral(lo, hi, rate, t_ref),
            SupportRatioFn::Babyboom { table } => table,
        };
        let (ts, te) = (table.t_start, table.t_end());
        let mut total = 0.0;
        if lo < ts {
            total += table.before * exp_integral(lo, hi.min(ts), rate, t_ref);
        }
        if hi > te {
            total += table.after * exp_integral(lo.max(te), hi, rate, t_ref);
        }
        let (a, b) = (lo.max(ts), hi.min(te));
        if a < b {
            let first = ((a - ts) / table.step).floor() as usize;
            let last = (((b - ts) / table.step).ceil() as usize).min(table.values.len() - 1);
            for i in first..last {
                let c0 = (ts + table.step * i as f64).max(a);
                let c1 = (ts + table.step * (i + 1) as f64).min(b);
                if c1 <= c0 {
                    continue;
                }
                let mid = 0.5 * (c0 + c1);
                let half = 0.5 * (c1 - c0);
                total += half
                    * GL5
                        .iter()
                        .map(|&(x, w)| {
                            let s = mid + half * x;
                            w * table.eval(s) * (rate * (s - t_ref)).exp()
                        })
                        .sum::<f64>();
            }
        }
        total
    }
}

pub fn bb_support_ratio(t: f64, support: &SupportRatioFn) -> f64 {
    support.eval(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Scenario;

    fn us() -> DemographyParams {
        Scenario::us_baseline().demography
    }

    #[test]
    fn survival_at_entry_is_one_and_decreasing() {
        let d = us();
        assert_eq!(survival(30.0, &d).unwrap(), 1.0);
        let s65 = survival(65.0, &d).unwrap();
        let s100 = survival(100.0, &d).unwrap();
        assert!(s100 > 0.0 && s100 < s65 && s65 < 1.0);
        assert!(matches!(survival(29.0, &d), Err(Error::Domain(_))));
    }

    #[test]
    fn lambda_segment_edges() {
        let d = us();
        assert_eq!(lambda_segment(40.0, 40.0, &d).unwrap(), 0.0);
        let total = lambda_segment(30.0, 100.0, &d).unwrap();
        let split = lambda_segment(30.0, 65.0, &d).unwrap() + lambda_segment(65.0, 100.0, &d).unwrap();
        assert!((total - split).abs() < 1e-9);
        assert!(lambda_segment(70.0, 60.0, &d).is_err());
        assert!(lambda_segment(20.0, 60.0, &d).is_err());
        assert!(lambda_segment(60.0, 101.0, &d).is_err());
    }

    #[test]
    fn support_ratio_invariances() {
        let d = us();
        let base = support_ratio(&d);
        let mut doubled = d.clone();
        doubled.n0 *= 2.0;
        assert_eq!(support_ratio(&doubled), base);
        let mut growing = d.clone();
        growing.rho = 0.05;
        assert!(support_ratio(&growing) > base);
    }

    #[test]
    fn annuity_factor_limits() {
        let mut d = us();
        let r = 0.02;
        let a = annuity_factor(&d, r).unwrap();
        assert!(a > 0.0 && a < 1.0 / r);
        d.makeham_a = 0.0;
        d.makeham_b = 0.0;
        // The integrand never underflows below 1e-16 before t ~ 1842; still
        // finite and equal to 1/r up to the truncated tail.
        let pure = annuity_factor(&d, r).unwrap();
        assert!((pure - 1.0 / r).abs() < 1e-12 / r, "{pure}");
        assert!(annuity_factor(&d, 0.0).is_err());
    }

    #[test]
    fn annuity_factor_decreases_with_heavier_mortality() {
        let d = us();
        let base = annuity_factor(&d, 0.02).unwrap();
        for bump in [
            |d: &mut DemographyParams| d.makeham_a *= 2.0,
            |d: &mut DemographyParams| d.makeham_b *= 2.0,
            |d: &mut DemographyParams| d.c *= 1.01,
        ] {
            let mut h = d.clone();
            bump(&mut h);
            assert!(annuity_factor(&h, 0.02).unwrap() < base);
        }
    }

    #[test]
    fn entrants_continuous_at_boom_edges() {
        let bb = Scenario::babyboom_fixture().demography.babyboom.unwrap();
        let eps = 1e-12;
        assert!((bb_entrants(bb.t1, &bb) - bb.n1).abs() < 1e-12);
        for t in [bb.t1, bb.t2] {
            assert!((bb_entrants(t + eps, &bb) - bb_entrants(t - eps, &bb)).abs() < 1e-9);
        }
        let expected_t2 = bb.nm / (1.0 + (bb.nm / bb.n1 - 1.0) * (-bb.kappa * (bb.t2 - bb.t1)).exp());
        assert!((bb_entrants(bb.t2, &bb) - expected_t2).abs() < 1e-12);
    }

    #[test]
    fn pchip_reproduces_nodes_and_stays_monotone() {
        let values = vec![1.0, 1.0, 2.0, 5.0, 5.5, 5.5, 3.0];
        let slopes = pchip_slopes(&values, 0.5);
        let table = SupportTable {
            t_start: 0.0,
            step: 0.5,
            values: values.clone(),
            slopes,
            before: 1.0,
            after: 3.0,
        };
        for (i, v) in values.iter().enumerate() {
            assert!((table.eval(0.5 * i as f64) - v).abs() < 1e-14);
        }
        // Flat segments stay flat, rising segments do not overshoot.
        assert!((table.eval(0.25) - 1.0).abs() < 1e-14);
        let mut prev = table.eval(0.5);
        let mut t = 0.5;
        while t <= 2.0 {
            let v = table.eval(t);
            assert!(v >= prev - 1e-14 && v <= 5.5 + 1e-14);
            prev = v;
            t += 0.01;
        }
    }
}
