//! Participant-side closed forms: the coefficients `L, M1, M2, M3, N`, the
//! value function, the feedback controls, initial-state estimates and the
//! expected optimal paths.
//!
//! Times are absolute; a cohort entering at `z` retires at `z + tau - a` and
//! dies at `z + omega - a`. The instant of retirement belongs to the
//! retirement side everywhere (coefficient branch, weight `lambda`, EET
//! freeze), matching the right-continuous indicator of the wealth equation.

use serde::{Deserialize, Serialize};

use crate::demography::{exp_integral, survival_unchecked};
use crate::error::{Error, Result};
use crate::quadrature::Quadrature;
use crate::scenario::{Model, Scenario};

const WINDOW_SLACK: f64 = 1e-9;

/// Salary and EET multipliers at `(t, z)`, plus the utility scale when a CRRA
/// exponent has been supplied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CohortCoefficients {
    pub t: f64,
    pub z: f64,
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
    pub n: f64,
    pub l: Option<UtilityScale>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilityScale {
    pub delta: f64,
    pub value: f64,
}

impl CohortCoefficients {
    /// `M = M1·θ + M2·k + M3`.
    pub fn m(&self, theta: f64, k: f64) -> f64 {
        self.m1 * theta + self.m2 * k + self.m3
    }

    /// Total resource `G = x + M·w + N·y`.
    pub fn resource(&self, x: f64, w: f64, y: f64, theta: f64, k: f64) -> f64 {
        x + self.m(theta, k) * w + self.n * y
    }
}

/// Annual EET benefit after retirement, `Y(z+τ−a)·(1−τ2)/a_τ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnuityIncome {
    pub value: f64,
}

pub fn annuity_income(y_at_retirement: f64, model: &Model) -> AnnuityIncome {
    AnnuityIncome {
        value: y_at_retirement * (1.0 - model.scenario.policy.tau2) / model.derived.a_tau,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CohortState {
    pub z: f64,
    pub zeta: f64,
    pub x0: f64,
    pub y0: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Controls {
    pub pi: f64,
    pub c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathRow {
    pub t: f64,
    pub ex: f64,
    pub ey: f64,
    pub epi: f64,
    pub ec: f64,
}

fn life_span(s: &Scenario) -> f64 {
    s.demography.omega - s.demography.a
}

fn work_span(s: &Scenario) -> f64 {
    s.demography.tau - s.demography.a
}

/// Clamps `t` into the life window of cohort `z`, or fails if it is outside.
fn life_time(t: f64, z: f64, s: &Scenario) -> Result<f64> {
    let end = z + life_span(s);
    if !(t >= z - WINDOW_SLACK && t <= end + WINDOW_SLACK) {
        return Err(Error::domain(format!("time {t} outside the life window [{z}, {end}]")));
    }
    Ok(t.clamp(z, end))
}

pub(crate) fn is_working(t: f64, z: f64, s: &Scenario) -> bool {
    t < z + work_span(s)
}

/// `b` as a function of time since entry.
pub(crate) fn weight_since_entry(elapsed: f64, s: &Scenario) -> f64 {
    let d = &s.demography;
    let base = (-s.market.r * elapsed).exp() * survival_unchecked(elapsed + d.a, d);
    if elapsed >= work_span(s) {
        base * s.preference.lambda
    } else {
        base
    }
}

/// Discount-and-survival weight `b(u;z)` of the participant's objective.
pub fn discount_weight(u: f64, z: f64, model: &Model) -> Result<f64> {
    let s = &model.scenario;
    let u = life_time(u, z, s)?;
    Ok(weight_since_entry(u - z, s))
}

fn scale_rate(delta: f64, model: &Model) -> f64 {
    let r = model.scenario.market.r;
    let nu = model.derived.nu;
    delta / (1.0 - delta) * (r + nu * nu / (2.0 * (1.0 - delta)))
}

fn check_delta(delta: f64) -> Result<()> {
    if delta < 1.0 && delta != 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("CRRA exponent must be < 1 and non-zero, got {delta}")))
    }
}

/// `I(t;z) = L(t;z)^{1/(1−δ)}`, the inner integral of the utility scale.
pub fn scale_integral(t: f64, z: f64, delta: f64, model: &Model) -> Result<f64> {
    check_delta(delta)?;
    let s = &model.scenario;
    let t = life_time(t, z, s)?;
    let e = t - z;
    let kappa = scale_rate(delta, model);
    let p = 1.0 / (1.0 - delta);
    let f = |v: f64| weight_since_entry(v, s).powf(p) * (kappa * (v - e)).exp();
    let q = Quadrature::default();
    let (work, end) = (work_span(s), life_span(s));
    if e < work {
        Ok(q.integrate(&f, e, work) + q.integrate(&f, work, end))
    } else {
        Ok(q.integrate(&f, e, end))
    }
}

/// Utility scale `L(t;z)` for CRRA exponent `delta`.
pub fn coeff_l(t: f64, z: f64, delta: f64, model: &Model) -> Result<f64> {
    Ok(scale_integral(t, z, delta, model)?.powf(1.0 - delta))
}

/// `I(t;z)` on an increasing grid of times, by backward recursion over the
/// grid cells. Within a cell the integrand is smooth unless the cell
/// straddles retirement, in which case it is split there.
pub fn scale_integral_grid(z: f64, delta: f64, times: &[f64], model: &Model) -> Result<Vec<f64>> {
    check_delta(delta)?;
    let s = &model.scenario;
    let end = z + life_span(s);
    let retire = z + work_span(s);
    for &t in times {
        life_time(t, z, s)?;
    }
    let kappa = scale_rate(delta, model);
    let p = 1.0 / (1.0 - delta);
    let q = Quadrature::default();
    let cell = |lo: f64, hi: f64| -> f64 {
        // ∫_lo^hi f(u) e^{κ(u−lo)} du with f the powered weight.
        let f = |u: f64| weight_since_entry(u - z, s).powf(p) * (kappa * (u - lo)).exp();
        if lo < retire && retire < hi {
            q.integrate(&f, lo, retire) + q.integrate(&f, retire, hi)
        } else {
            q.integrate(&f, lo, hi)
        }
    };
    let mut out = vec![0.0; times.len()];
    let mut acc = 0.0;
    let mut next = end;
    for (i, &t) in times.iter().enumerate().rev() {
        let t = t.clamp(z, end);
        acc = cell(t, next) + (kappa * (next - t)).exp() * acc;
        out[i] = acc;
        next = t;
    }
    Ok(out)
}

/// `M1, M2, M3, N` at `(t, z)`; `l` is left unset.
pub fn coefficients(t: f64, z: f64, model: &Model) -> Result<CohortCoefficients> {
    let s = &model.scenario;
    let t = life_time(t, z, s)?;
    let d = &model.derived;
    let (eps, epst) = (d.epsilon, d.epsilon_tilde);
    let r = s.market.r;
    let tau1 = s.policy.tau1;
    let tau2 = s.policy.tau2;
    let retire = z + work_span(s);
    let end = z + life_span(s);
    let to_retire = retire - t;
    let k_eet = (1.0 - tau2) * (1.0 - (-r * (s.demography.omega - s.demography.tau)).exp()) / (r * d.a_tau);

    let (m2, m3, n) = if to_retire <= 0.0 {
        (0.0, 0.0, (1.0 - tau2) / (r * d.a_tau) * (1.0 - (-r * (end - t)).exp()))
    } else {
        let g_eps = (eps * to_retire).exp_m1();
        let m3 = (1.0 - tau1) / eps * g_eps;
        let m2 = k_eet * ((eps * to_retire).exp() - (epst * to_retire).exp()) / (eps - epst) - m3;
        (m2, m3, k_eet * (epst * to_retire).exp())
    };

    // PAYGO benefits less contributions forgone; Λ may vary in time.
    let benefit_from = retire.max(t);
    let m1 = model.support.weighted_integral(benefit_from, end, eps, t)
        - (1.0 - tau1) * exp_integral(t, benefit_from, eps, t);

    Ok(CohortCoefficients {
        t,
        z,
        m1,
        m2,
        m3,
        n,
        l: None,
    })
}

/// Constant-Λ closed form of `M1`, used as a cross-check of the general path.
pub fn m1_closed_form(t: f64, z: f64, lambda: f64, model: &Model) -> Result<f64> {
    let s = &model.scenario;
    let t = life_time(t, z, s)?;
    let eps = model.derived.epsilon;
    let tau1 = s.policy.tau1;
    let d = &s.demography;
    let to_retire = z + d.tau - d.a - t;
    if to_retire <= 0.0 {
        Ok(lambda / eps * ((eps * (z - t + d.omega - d.a)).exp() - 1.0))
    } else {
        let tail = lambda * (eps * (d.omega - d.tau)).exp() - lambda - (1.0 - tau1);
        Ok(((1.0 - tau1) + tail * (eps * to_retire).exp()) / eps)
    }
}

/// Coefficients together with the utility scale for `delta`.
pub fn cohort_coefficients(t: f64, z: f64, delta: f64, model: &Model) -> Result<CohortCoefficients> {
    let mut c = coefficients(t, z, model)?;
    c.l = Some(UtilityScale {
        delta,
        value: coeff_l(t, z, delta, model)?,
    });
    Ok(c)
}

#[allow(clippy::too_many_arguments)]
pub fn total_resource(t: f64, x: f64, w: f64, y: f64, z: f64, theta: f64, k: f64, model: &Model) -> Result<f64> {
    Ok(coefficients(t, z, model)?.resource(x, w, y, theta, k))
}

/// `V = L·G^δ/δ`.
#[allow(clippy::too_many_arguments)]
pub fn value_function(
    t: f64,
    x: f64,
    w: f64,
    y: f64,
    z: f64,
    theta: f64,
    k: f64,
    model: &Model,
    delta: f64,
) -> Result<f64> {
    if !(w > 0.0) {
        return Err(Error::domain(format!("salary must be positive, got {w}")));
    }
    let c = cohort_coefficients(t, z, delta, model)?;
    let g = c.resource(x, w, y, theta, k);
    if !(g > 0.0) {
        return Err(Error::InsolventCohort { z, resource: g });
    }
    Ok(c.l.expect("scale set").value * g.powf(delta) / delta)
}

/// Feedback controls `(π*, C*)` from the closed-form value function.
#[allow(clippy::too_many_arguments)]
pub fn optimal_controls(
    t: f64,
    x: f64,
    w: f64,
    y: f64,
    z: f64,
    theta: f64,
    k: f64,
    model: &Model,
    delta: f64,
) -> Result<Controls> {
    let c = coefficients(t, z, model)?;
    let g = c.resource(x, w, y, theta, k);
    if !(g > 0.0) {
        return Err(Error::InsolventCohort { z, resource: g });
    }
    let i = scale_integral(t, z, delta, model)?;
    let b = discount_weight(t, z, model)?;
    Ok(controls_from(c.t, g, w, y, theta, k, &c, b, i, delta, model))
}

/// Controls given precomputed `G`, `b(t)` and `I(t)`. `C* = b^{1/(1−δ)}·G/I`
/// is the same as `(L/b)^{1/(δ−1)}·G` but stays finite as `I → 0`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn controls_from(
    t: f64,
    g: f64,
    w: f64,
    y: f64,
    theta: f64,
    k: f64,
    c: &CohortCoefficients,
    b: f64,
    i: f64,
    delta: f64,
    model: &Model,
) -> Controls {
    let m = &model.scenario.market;
    let nu = model.derived.nu;
    let working = is_working(t, c.z, &model.scenario);
    let eet = if working { m.beta * y * c.n } else { 0.0 };
    let pi = nu * g / (m.sigma * (1.0 - delta)) - (m.xi * w * c.m(theta, k) + eet) / m.sigma;
    let cons = b.powf(1.0 / (1.0 - delta)) * g / i;
    Controls { pi, c: cons }
}

/// Drift of `E[G]/I` along the optimal path.
pub(crate) fn resource_growth(delta: f64, model: &Model) -> f64 {
    let r = model.scenario.market.r;
    let nu = model.derived.nu;
    r / (1.0 - delta) + (2.0 - delta) * nu * nu / (2.0 * (1.0 - delta).powi(2))
}

/// `E[Y(t)]` for a cohort that contributes at rate `k_before` until `switch`
/// and `k_after` afterwards; frozen from retirement on.
fn expected_eet(t: f64, z: f64, switch: f64, k_before: f64, k_after: f64, s: &Scenario) -> f64 {
    let m = &s.market;
    let upto = t.min(z + work_span(s));
    if upto <= z {
        return 0.0;
    }
    // ∫ k(u) W0 e^{γu} e^{α(upto−u)} du over [z, upto].
    let leg = |lo: f64, hi: f64| {
        if hi <= lo {
            0.0
        } else {
            m.w0 * (m.alpha * upto).exp() * exp_integral(lo, hi, m.gamma - m.alpha, 0.0)
        }
    };
    let mid = switch.clamp(z, upto);
    k_before * leg(z, mid) + k_after * leg(mid, upto)
}

pub fn delta_of(z: f64, model: &Model) -> f64 {
    model.scenario.delta_for_entry(z)
}

/// Expected private wealth and EET balance of cohort `z` at `t0`, assuming
/// `(θ0, k0)` prevailed over its whole past.
pub fn estimate_initial_states(z: f64, model: &Model) -> Result<CohortState> {
    let s = &model.scenario;
    let t0 = s.policy.t0;
    if !(z >= model.z_min() - WINDOW_SLACK && z <= t0 + WINDOW_SLACK) {
        return Err(Error::domain(format!(
            "entry time {z} outside the living range [{}, {t0}]",
            model.z_min()
        )));
    }
    let z = z.clamp(model.z_min(), t0);
    let delta = delta_of(z, model);
    let (theta0, k0) = (s.policy.theta0, s.policy.k0);
    let y0 = expected_eet(t0, z, t0, k0, k0, s);
    let now = coefficients(t0, z, model)?;
    let entry = coefficients(z, z, model)?;
    let w_t0 = model.w_at_t0();
    let w_z = s.market.w0 * (s.market.gamma * z).exp();
    let i_now = scale_integral(t0, z, delta, model)?;
    let i_entry = scale_integral(z, z, delta, model)?;
    let expected_g = entry.m(theta0, k0) * w_z * (i_now / i_entry) * (resource_growth(delta, model) * (t0 - z)).exp();
    let x0 = expected_g - now.m(theta0, k0) * w_t0 - now.n * y0;
    Ok(CohortState {
        z,
        zeta: s.demography.a + t0 - z,
        x0,
        y0,
        delta,
    })
}

fn time_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step - 1e-9).ceil().max(0.0) as usize;
    let mut v: Vec<f64> = (0..n).map(|i| lo + step * i as f64).collect();
    v.push(hi);
    v
}

/// Expected optimal paths of cohort `z` when `(θ*, k*)` takes effect at `t0`.
/// A cohort already alive at `t0` runs on `(θ0, k0)` until then.
pub fn expected_paths(z: f64, model: &Model, theta_star: f64, k_star: f64, grid: f64) -> Result<Vec<PathRow>> {
    let s = &model.scenario;
    if z < model.z_min() - WINDOW_SLACK {
        return Err(Error::domain(format!("cohort entering at {z} is dead at t0 = {}", s.policy.t0)));
    }
    expected_paths_switching(
        z,
        model,
        (s.policy.theta0, s.policy.k0),
        (theta_star, k_star),
        s.policy.t0,
        grid,
    )
}

/// Expected optimal paths under rates `before` on `[z, switch)` and `after`
/// from `switch` on (`switch ≤ z` means `after` throughout).
pub fn expected_paths_switching(
    z: f64,
    model: &Model,
    before: (f64, f64),
    after: (f64, f64),
    switch: f64,
    grid: f64,
) -> Result<Vec<PathRow>> {
    if !(grid > 0.0) {
        return Err(Error::domain(format!("grid step must be positive, got {grid}")));
    }
    let s = &model.scenario;
    let delta = delta_of(z, model);
    let end = z + life_span(s);
    let times = time_grid(z, end, grid);
    let start = z.max(switch).min(end);
    let g_rate = resource_growth(delta, model);
    let w_of = |t: f64| s.market.w0 * (s.market.gamma * t).exp();

    let i_grid = scale_integral_grid(z, delta, &times, model)?;
    let i_entry = scale_integral(z, z, delta, model)?;
    let i_start = scale_integral(start, z, delta, model)?;

    let entry = coefficients(z, z, model)?;
    let g_entry_rates = if z >= switch { after } else { before };
    let g_entry = entry.m(g_entry_rates.0, g_entry_rates.1) * w_of(z);
    let g_start = if z >= switch {
        g_entry
    } else {
        // E[X(switch)] carried over, re-valued at the new rates.
        let c = coefficients(start, z, model)?;
        let ey = expected_eet(start, z, switch, before.1, after.1, s);
        let eg = g_entry * (i_start / i_entry) * (g_rate * (start - z)).exp();
        let ex = eg - c.m(before.0, before.1) * w_of(start) - c.n * ey;
        c.resource(ex, w_of(start), ey, after.0, after.1)
    };

    let mut rows = Vec::with_capacity(times.len());
    for (&t, &i_t) in times.iter().zip(&i_grid) {
        let ((theta, k), g_ref, i_ref, t_ref) = if t < start {
            (before, g_entry, i_entry, z)
        } else {
            (after, g_start, i_start, start)
        };
        let c = coefficients(t, z, model)?;
        let ew = w_of(t);
        let ey = expected_eet(t, z, switch, before.1, after.1, s);
        let drift = (g_rate * (t - t_ref)).exp();
        let eg = g_ref * (i_t / i_ref) * drift;
        let ex = eg - c.m(theta, k) * ew - c.n * ey;
        let b = weight_since_entry(t - z, s);
        let ctl = controls_from(t, eg, ew, ey, theta, k, &c, b, i_t, delta, model);
        // E[C] without the 0/0 at the terminal node.
        let ec = b.powf(1.0 / (1.0 - delta)) * g_ref / i_ref * drift;
        rows.push(PathRow {
            t,
            ex,
            ey,
            epi: ctl.pi,
            ec,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn us() -> Model {
        Model::new(Scenario::us_baseline()).unwrap()
    }

    #[test]
    fn weight_at_entry_and_after_forty_years() {
        let m = us();
        assert_eq!(discount_weight(0.0, 0.0, &m).unwrap(), 1.0);
        let w = discount_weight(40.0, 0.0, &m).unwrap();
        assert!((w - 0.620_462_989_463_196_7).abs() < 1e-14, "{w}");
        assert!(discount_weight(-1.0, 0.0, &m).is_err());
        assert!(discount_weight(71.0, 0.0, &m).is_err());
    }

    #[test]
    fn weight_jumps_by_lambda_at_retirement() {
        let m = us();
        let gap = 1e-9;
        let ratio = discount_weight(35.0 + gap, 0.0, &m).unwrap() / discount_weight(35.0 - gap, 0.0, &m).unwrap();
        assert!((ratio - 1.5).abs() < 1e-7);
    }

    #[test]
    fn l_at_entry_matches_derived_l0() {
        let m = us();
        let l = coeff_l(3.0, 3.0, -2.8, &m).unwrap();
        assert!((l - m.derived.l0).abs() < 1e-10 * m.derived.l0, "{l} vs {}", m.derived.l0);
        assert_eq!(coeff_l(73.0, 3.0, -2.8, &m).unwrap(), 0.0);
        assert!(coeff_l(72.9, 3.0, -2.8, &m).unwrap() > 0.0);
        assert!(coeff_l(1.0, 0.0, 0.0, &m).is_err());
    }

    #[test]
    fn grid_integral_matches_pointwise() {
        let m = us();
        let times: Vec<f64> = (0..=70).map(|i| -5.0 + i as f64).collect();
        let grid = scale_integral_grid(-5.0, -2.9, &times, &m).unwrap();
        for (&t, &g) in times.iter().zip(&grid) {
            let p = scale_integral(t, -5.0, -2.9, &m).unwrap();
            assert!((g - p).abs() < 1e-10 * p.max(1.0), "t={t}: {g} vs {p}");
        }
    }

    #[test]
    fn retiree_branch_zeroes_m2_m3() {
        let m = us();
        let c = coefficients(0.0, -40.0, &m).unwrap();
        assert_eq!(c.m2, 0.0);
        assert_eq!(c.m3, 0.0);
        assert!(c.m1 > 0.0 && c.n > 0.0);
    }

    #[test]
    fn general_m1_matches_closed_form() {
        let m = us();
        for (t, z) in [(0.0, 0.0), (0.0, -10.0), (0.0, -35.0), (0.0, -50.0), (12.5, -20.0)] {
            let g = coefficients(t, z, &m).unwrap().m1;
            let c = m1_closed_form(t, z, m.derived.lambda, &m).unwrap();
            assert!((g - c).abs() < 1e-12, "({t},{z}): {g} vs {c}");
        }
    }

    #[test]
    fn new_entrant_starts_from_zero() {
        let m = us();
        let st = estimate_initial_states(0.0, &m).unwrap();
        assert!(st.x0.abs() < 1e-12 && st.y0 == 0.0);
        assert!(estimate_initial_states(0.5, &m).is_err());
        assert!(estimate_initial_states(-70.5, &m).is_err());
    }

    #[test]
    fn retiree_eet_balance_is_frozen() {
        let mut s = Scenario::us_baseline();
        let m = Model::new(s.clone()).unwrap();
        let y = estimate_initial_states(-50.0, &m).unwrap().y0;
        s.policy.t0 = 3.0;
        let later = Model::new(s).unwrap();
        let y_later = estimate_initial_states(-50.0, &later).unwrap().y0;
        assert!((y - y_later).abs() < 1e-12 * y);
    }

    #[test]
    fn paths_start_and_end_at_zero_wealth() {
        let m = us();
        for z in [0.0, -10.0, -40.0, 5.0] {
            let rows = expected_paths(z, &m, 0.1169, 0.1331, 0.05).unwrap();
            assert!(rows[0].ex.abs() < 1e-6, "z={z}: {}", rows[0].ex);
            assert!(rows.last().unwrap().ex.abs() < 1e-6);
            assert!(rows.iter().all(|r| r.ec > 0.0 && r.ec.is_finite()));
        }
    }
}
