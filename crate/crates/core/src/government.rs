//! The government's problem at `t0`: social welfare as a function of the
//! contribution rates, the admissible `(θ, k)` region, the constrained
//! maximizer, and the variant where participants choose `k` themselves.
//!
//! Every cohort's indirect utility at `t0` is `L·G^δ/δ` with `G` affine in
//! `(θ, k)`. [`Welfare`] tabulates the affine pieces once on the entry-time
//! grid so an evaluation is a weighted sum of powers.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::demography;
use crate::error::{Error, Result};
use crate::lifecycle;
use crate::preference::{self, CaseLabel, EetSavingsFlag};
use crate::scenario::Model;

/// Entry-time step of the welfare integral and the admissibility constraints.
pub const DEFAULT_Z_STEP: f64 = 0.05;

/// Side of the coarse `(θ, k)` search grid.
pub const SEARCH_GRID: usize = 101;

const CAP_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightingMode {
    Population,
    Equal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyMode {
    Mandatory,
    Voluntary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelfareOptions {
    pub mode: WeightingMode,
    pub z_step: f64,
    /// Weight existing cohorts by surviving mass `n(z)·s(ζ)` instead of
    /// entrant density. Diagnostic only.
    pub survival_weighted: bool,
}

impl WelfareOptions {
    pub fn new(mode: WeightingMode) -> Self {
        WelfareOptions {
            mode,
            z_step: DEFAULT_Z_STEP,
            survival_weighted: false,
        }
    }

    pub fn with_z_step(mut self, z_step: f64) -> Self {
        self.z_step = z_step;
        self
    }
}

/// One quadrature node: contributes `weight·G^δ` with
/// `G = c0 + c_theta·θ + c_k·k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub z: f64,
    pub future: bool,
    pub retired: bool,
    pub weight: f64,
    pub delta: f64,
    pub c0: f64,
    pub c_theta: f64,
    pub c_k: f64,
}

impl Term {
    pub fn resource(&self, theta: f64, k: f64) -> f64 {
        self.c0 + self.c_theta * theta + self.c_k * k
    }

    /// Nodes with zero weight (the cohort dying exactly at `t0`) impose no
    /// constraint: their resource is identically zero.
    fn binding(&self) -> bool {
        self.weight != 0.0
    }
}

/// `a_theta·θ + a_k·k + c ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfPlane {
    pub a_theta: f64,
    pub a_k: f64,
    pub c: f64,
}

impl HalfPlane {
    fn eval(&self, p: (f64, f64)) -> f64 {
        self.a_theta * p.0 + self.a_k * p.1 + self.c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibleRegion {
    pub half_planes: Vec<HalfPlane>,
    /// Vertices of the convex polygon, counter-clockwise.
    pub vertices: Vec<(f64, f64)>,
    pub m: f64,
    pub z_step: f64,
}

impl AdmissibleRegion {
    pub fn contains(&self, theta: f64, k: f64) -> bool {
        in_box(theta, k, self.m) && self.half_planes.iter().all(|h| h.eval((theta, k)) >= 0.0)
    }
}

fn in_box(theta: f64, k: f64, m: f64) -> bool {
    (0.0..=1.0).contains(&theta) && (0.0..=1.0).contains(&k) && theta + k <= m + CAP_SLACK
}

/// Simpson weights for `n` equal intervals of width `h`, with a 3/8 panel
/// at the end when `n` is odd.
fn simpson_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![0.0; n + 1];
    match n {
        0 => {}
        1 => {
            w[0] = 0.5 * h;
            w[1] = 0.5 * h;
        }
        _ => {
            let simpson_n = if n % 2 == 0 { n } else { n - 3 };
            for i in (0..simpson_n).step_by(2) {
                w[i] += h / 3.0;
                w[i + 1] += 4.0 * h / 3.0;
                w[i + 2] += h / 3.0;
            }
            if simpson_n < n {
                let s = simpson_n;
                for (j, c) in [1.0, 3.0, 3.0, 1.0].iter().enumerate() {
                    w[s + j] += 3.0 * h / 8.0 * c;
                }
            }
        }
    }
    w
}

fn nodes_on(lo: f64, hi: f64, step: f64) -> Vec<(f64, f64)> {
    if hi <= lo {
        return Vec::new();
    }
    let n = ((hi - lo) / step).round().max(1.0) as usize;
    let h = (hi - lo) / n as f64;
    simpson_weights(n, h)
        .into_iter()
        .enumerate()
        .map(|(i, w)| (if i == n { hi } else { lo + h * i as f64 }, w))
        .collect()
}

/// Tabulated welfare integrand for fixed scenario and weighting.
#[derive(Debug, Clone)]
pub struct Welfare {
    pub terms: Vec<Term>,
    pub options: WelfareOptions,
    pub m: f64,
}

impl Welfare {
    pub fn new(model: &Model, options: WelfareOptions) -> Result<Welfare> {
        if !(options.z_step > 0.0) {
            return Err(Error::domain(format!("z step must be positive, got {}", options.z_step)));
        }
        let s = &model.scenario;
        let d = &s.demography;
        let t0 = s.policy.t0;
        let w0 = model.w_at_t0();
        let mode = options.mode;

        // Retirees on [z_min, z_retire] with δ2, workers on [z_retire, t0]
        // with δ1; the shared node carries each side's limit.
        let mut existing: Vec<(f64, f64, bool)> = nodes_on(model.z_min(), model.z_retire(), options.z_step)
            .into_iter()
            .map(|(z, w)| (z, w, true))
            .collect();
        existing.extend(
            nodes_on(model.z_retire(), t0, options.z_step)
                .into_iter()
                .map(|(z, w)| (z, w, false)),
        );

        let mut terms = existing
            .par_iter()
            .map(|&(z, quad_w, retired)| -> Result<Term> {
                let delta = if retired {
                    s.preference.delta2
                } else {
                    s.preference.delta1
                };
                let st = lifecycle::estimate_initial_states(z, model)?;
                let c = lifecycle::coefficients(t0, z, model)?;
                let l = lifecycle::coeff_l(t0, z, delta, model)?;
                let mut n = match mode {
                    WeightingMode::Population => demography::entrants(z, d),
                    WeightingMode::Equal => 1.0,
                };
                if options.survival_weighted {
                    n *= demography::survival_unchecked(d.a + t0 - z, d);
                }
                Ok(Term {
                    z,
                    future: false,
                    retired,
                    weight: quad_w * n * l / delta,
                    delta,
                    c0: st.x0 + c.m3 * w0 + c.n * st.y0,
                    c_theta: c.m1 * w0,
                    c_k: c.m2 * w0,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        terms.extend(future_terms(model, options)?);
        Ok(Welfare {
            terms,
            options,
            m: s.policy.m,
        })
    }

    /// Sum of `weight·G^δ` under per-term rates, or `None` if some binding
    /// term has `G ≤ 0`.
    fn sum_with(&self, rates: impl Fn(&Term) -> (f64, f64)) -> Option<f64> {
        let mut total = 0.0;
        for t in &self.terms {
            if !t.binding() {
                continue;
            }
            let (theta, k) = rates(t);
            let g = t.resource(theta, k);
            if !(g > 0.0) {
                return None;
            }
            total += t.weight * g.powf(t.delta);
        }
        Some(total)
    }

    /// Objective, or `None` outside the box, the cap or the admissible region.
    pub fn evaluate(&self, theta: f64, k: f64) -> Option<f64> {
        if !in_box(theta, k, self.m) {
            return None;
        }
        self.sum_with(|_| (theta, k))
    }

    pub fn objective(&self, theta: f64, k: f64) -> Result<f64> {
        check_rates(theta, k, self.m)?;
        self.sum_with(|_| (theta, k)).ok_or_else(|| {
            let worst = self
                .terms
                .iter()
                .filter(|t| t.binding())
                .min_by(|a, b| a.resource(theta, k).total_cmp(&b.resource(theta, k)))
                .expect("at least one cohort");
            Error::InsolventCohort {
                z: worst.z,
                resource: worst.resource(theta, k),
            }
        })
    }

    /// Objective with a cohort-specific EET rate `k_of(z, future)`.
    pub fn objective_with(&self, theta: f64, k_of: impl Fn(f64, bool) -> f64) -> Result<f64> {
        self.sum_with(|t| (theta, k_of(t.z, t.future)))
            .ok_or_else(|| Error::InsolventCohort { z: f64::NAN, resource: 0.0 })
    }

    pub fn half_planes(&self) -> Vec<HalfPlane> {
        self.terms
            .iter()
            .filter(|t| t.binding())
            .map(|t| HalfPlane {
                a_theta: t.c_theta,
                a_k: t.c_k,
                c: t.c0,
            })
            .collect()
    }

    pub fn region(&self) -> AdmissibleRegion {
        let half_planes = self.half_planes();
        let m = self.m;
        let mut poly = vec![(0.0, 0.0), (m.min(1.0), 0.0), (0.0, m.min(1.0))];
        for h in &half_planes {
            poly = clip(&poly, h);
            if poly.is_empty() {
                break;
            }
        }
        AdmissibleRegion {
            half_planes,
            vertices: poly,
            m,
            z_step: self.options.z_step,
        }
    }

    /// Welfare when participants pick `k` themselves (`M2⁺` substitution).
    pub fn voluntary_sum(&self, theta: f64) -> Option<f64> {
        let m = self.m;
        let mut total = 0.0;
        for t in &self.terms {
            if !t.binding() {
                continue;
            }
            // k = m − θ where M2 > 0, else 0.
            let g = t.resource(theta, 0.0) + t.c_k.max(0.0) * (m - theta);
            if !(g > 0.0) {
                return None;
            }
            total += t.weight * g.powf(t.delta);
        }
        Some(total)
    }
}

fn check_rates(theta: f64, k: f64, m: f64) -> Result<()> {
    if !((0.0..=1.0).contains(&theta) && (0.0..=1.0).contains(&k)) {
        return Err(Error::domain(format!("rates ({theta}, {k}) outside [0, 1]")));
    }
    if theta + k > m + CAP_SLACK {
        return Err(Error::domain(format!("cap constraint theta + k <= m = {m} violated by {}", theta + k)));
    }
    Ok(())
}

/// Future entrants `z > t0`, each carrying `L0·E[W(z)^δ0]` discounted to
/// `t0`. Where `M01(z)` is constant the remaining integral is closed form.
fn future_terms(model: &Model, options: WelfareOptions) -> Result<Vec<Term>> {
    let s = &model.scenario;
    let m = &s.market;
    let d = &s.demography;
    let t0 = s.policy.t0;
    let delta0 = s.preference.delta0;
    let rho_f = s.future_growth_rate();
    let salary_moment = m.gamma + 0.5 * (delta0 - 1.0) * m.xi * m.xi;
    let decay = m.r - delta0 * salary_moment;
    let scale = model.derived.l0 * model.w_at_t0().powf(delta0) / delta0;
    let density = |z: f64| match options.mode {
        WeightingMode::Population => demography::entrants(z, d),
        WeightingMode::Equal => (rho_f * z).exp(),
    };

    // Benefits of entrants after this date see only the constant tail of Λ.
    let z_const = match model.support.varying_window() {
        Some((_, end)) => t0.max(end - (d.tau - d.a)),
        None => t0,
    };
    let mut terms = Vec::new();
    let make = |z: f64, weight: f64| -> Result<Term> {
        let c = lifecycle::coefficients(z, z, model)?;
        Ok(Term {
            z,
            future: true,
            retired: false,
            weight,
            delta: delta0,
            c0: c.m3,
            c_theta: c.m1,
            c_k: c.m2,
        })
    };
    for (z, w) in nodes_on(t0, z_const, options.z_step) {
        if w != 0.0 {
            terms.push(make(z, w * scale * density(z) * (-decay * (z - t0)).exp())?);
        }
    }
    let tail = density(z_const) * (-decay * (z_const - t0)).exp() / (decay - rho_f);
    terms.push(make(z_const, scale * tail)?);
    Ok(terms)
}

fn clip(poly: &[(f64, f64)], h: &HalfPlane) -> Vec<(f64, f64)> {
    let n = poly.len();
    let mut out = Vec::with_capacity(n + 1);
    for i in 0..n {
        let p = poly[i];
        let q = poly[(i + 1) % n];
        let (fp, fq) = (h.eval(p), h.eval(q));
        if fp >= 0.0 {
            out.push(p);
        }
        if (fp >= 0.0) != (fq >= 0.0) {
            let t = fp / (fp - fq);
            out.push((p.0 + t * (q.0 - p.0), p.1 + t * (q.1 - p.1)));
        }
    }
    out
}

pub fn objective(theta: f64, k: f64, model: &Model, mode: WeightingMode) -> Result<f64> {
    check_rates(theta, k, model.scenario.policy.m)?;
    Welfare::new(model, WelfareOptions::new(mode))?.objective(theta, k)
}

pub fn admissible_region(model: &Model, z_step: f64) -> Result<AdmissibleRegion> {
    let welfare = Welfare::new(model, WelfareOptions::new(WeightingMode::Population).with_z_step(z_step))?;
    let region = welfare.region();
    if region.vertices.is_empty() {
        return Err(Error::EmptyRegion(
            "no (theta, k) keeps every cohort's total resource non-negative".into(),
        ));
    }
    Ok(region)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub evaluations: usize,
    pub grid_resolution: usize,
    pub feasible_grid_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalMix {
    pub theta_star: f64,
    pub k_star: f64,
    #[serde(rename = "objective")]
    pub objective_value: f64,
    pub weighting: WeightingMode,
    pub cap_binding: bool,
    pub grid_step: f64,
    pub mode: PolicyMode,
    pub diagnostics: SolverDiagnostics,
}

struct Search<'a> {
    welfare: &'a Welfare,
    evaluations: usize,
}

impl Search<'_> {
    fn eval(&mut self, theta: f64, k: f64) -> Option<f64> {
        self.evaluations += 1;
        self.welfare.evaluate(theta, k)
    }

    /// Golden-section maximum of a concave `f` on `[lo, hi]`.
    fn golden(&mut self, f: &dyn Fn(&mut Self, f64) -> f64, mut lo: f64, mut hi: f64) -> (f64, f64) {
        let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
        let mut x1 = hi - inv_phi * (hi - lo);
        let mut x2 = lo + inv_phi * (hi - lo);
        let mut f1 = f(self, x1);
        let mut f2 = f(self, x2);
        while hi - lo > 1e-11 {
            if f1 < f2 {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + inv_phi * (hi - lo);
                f2 = f(self, x2);
            } else {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - inv_phi * (hi - lo);
                f1 = f(self, x1);
            }
        }
        if f1 >= f2 {
            (x1, f1)
        } else {
            (x2, f2)
        }
    }
}

/// Feasible `[lo, hi]` of `θ` on the face `θ + k = m`.
fn face_interval(welfare: &Welfare) -> Option<(f64, f64)> {
    let m = welfare.m;
    let (mut lo, mut hi) = (0.0f64, m);
    for h in welfare.half_planes() {
        // (a_θ − a_k)·θ + (a_k·m + c) ≥ 0.
        let slope = h.a_theta - h.a_k;
        let offset = h.a_k * m + h.c;
        if slope > 0.0 {
            lo = lo.max(-offset / slope);
        } else if slope < 0.0 {
            hi = hi.min(-offset / slope);
        } else if offset < 0.0 {
            return None;
        }
    }
    (lo < hi).then_some((lo, hi))
}

/// Maximizes the mandatory-EET welfare over the admissible region.
pub fn optimize_welfare(welfare: &Welfare) -> Result<OptimalMix> {
    let m = welfare.m;
    let n = SEARCH_GRID - 1;
    let points: Vec<(f64, f64)> = (0..=n)
        .flat_map(|i| (0..=n - i).map(move |j| (m * i as f64 / n as f64, m * j as f64 / n as f64)))
        .collect();
    let scored: Vec<(f64, f64, Option<f64>)> = points
        .par_iter()
        .map(|&(th, k)| (th, k, welfare.evaluate(th, k)))
        .collect();
    let feasible: Vec<(f64, f64, f64)> = scored.iter().filter_map(|&(th, k, v)| v.map(|v| (th, k, v))).collect();
    let mut search = Search {
        welfare,
        evaluations: scored.len(),
    };

    let mut best = feasible
        .iter()
        .copied()
        .max_by(|a, b| a.2.total_cmp(&b.2));
    if best.is_none() {
        // The grid may miss a thin region; try its vertices and centroid.
        let region = welfare.region();
        if region.vertices.is_empty() {
            return Err(Error::EmptyRegion("no admissible (theta, k)".into()));
        }
        let nv = region.vertices.len() as f64;
        let centroid = region
            .vertices
            .iter()
            .fold((0.0, 0.0), |acc, v| (acc.0 + v.0 / nv, acc.1 + v.1 / nv));
        best = std::iter::once(centroid)
            .chain(region.vertices.iter().copied())
            .filter_map(|(th, k)| search.eval(th, k).map(|v| (th, k, v)))
            .max_by(|a, b| a.2.total_cmp(&b.2));
    }
    let Some(mut best) = best else {
        return Err(Error::EmptyRegion("admissible region has no interior point".into()));
    };

    // Compass search with axis and along-face directions.
    let dirs: [(f64, f64); 6] = [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0), (1.0, -1.0), (-1.0, 1.0)];
    let mut step = (m / n as f64).max(1e-6);
    while step > 1e-10 {
        let mut moved = false;
        for (dt, dk) in dirs {
            let (th, k) = (best.0 + dt * step, best.1 + dk * step);
            if let Some(v) = search.eval(th, k) {
                if v > best.2 {
                    best = (th, k, v);
                    moved = true;
                    break;
                }
            }
        }
        if !moved {
            step *= 0.5;
        }
    }

    if let Some((lo, hi)) = face_interval(welfare) {
        let pad = 1e-12 * m.max(1.0);
        let f = |s: &mut Search, th: f64| s.eval(th, m - th).unwrap_or(f64::NEG_INFINITY);
        let (th, v) = search.golden(&f, lo + pad, hi - pad);
        if v > best.2 {
            best = (th, m - th, v);
        }
    }

    Ok(OptimalMix {
        theta_star: best.0,
        k_star: best.1,
        objective_value: best.2,
        weighting: welfare.options.mode,
        cap_binding: best.0 + best.1 >= m - 1e-9,
        grid_step: welfare.options.z_step,
        mode: PolicyMode::Mandatory,
        diagnostics: SolverDiagnostics {
            evaluations: search.evaluations,
            grid_resolution: SEARCH_GRID,
            feasible_grid_points: feasible.len(),
        },
    })
}

pub fn optimize_mix(model: &Model, mode: WeightingMode) -> Result<OptimalMix> {
    optimize_welfare(&Welfare::new(model, WelfareOptions::new(mode))?)
}

/// A participant's EET choice: a point, or an interval when indifferent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoluntaryK {
    pub lo: f64,
    pub hi: f64,
    pub representative: f64,
}

impl VoluntaryK {
    pub fn is_interval(&self) -> bool {
        self.hi > self.lo
    }
}

/// Optimal voluntary EET rate of cohort `z` given PAYGO rate `θ`.
pub fn voluntary_k_star(theta: f64, z: f64, model: &Model) -> Result<VoluntaryK> {
    let s = &model.scenario;
    let m = s.policy.m;
    if !(0.0..=m).contains(&theta) {
        return Err(Error::domain(format!("theta = {theta} outside [0, m = {m}]")));
    }
    let t0 = s.policy.t0;
    let room = m - theta;
    if z <= model.z_retire() {
        return Ok(VoluntaryK {
            lo: 0.0,
            hi: room,
            representative: 0.0,
        });
    }
    let m2 = if z >= t0 {
        lifecycle::coefficients(z, z, model)?.m2
    } else {
        lifecycle::coefficients(t0, z, model)?.m2
    };
    Ok(if m2 > 0.0 {
        VoluntaryK {
            lo: room,
            hi: room,
            representative: room,
        }
    } else if m2 < 0.0 {
        VoluntaryK {
            lo: 0.0,
            hi: 0.0,
            representative: 0.0,
        }
    } else {
        VoluntaryK {
            lo: 0.0,
            hi: room,
            representative: room,
        }
    })
}

/// Age interval with open/closed ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgeInterval {
    pub lo: f64,
    pub hi: f64,
    pub lo_closed: bool,
    pub hi_closed: bool,
}

impl AgeInterval {
    pub fn contains(&self, x: f64) -> bool {
        (if self.lo_closed { x >= self.lo } else { x > self.lo }) && (if self.hi_closed { x <= self.hi } else { x < self.hi })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaBounds {
    /// `0 ∨ θ̲`.
    pub lower: f64,
    /// `m ∧ θ̄`.
    pub upper: f64,
    pub theta_lower_raw: f64,
    /// `+∞` when no cohort bounds `θ` from above.
    pub theta_upper_raw: f64,
    pub a1: Vec<AgeInterval>,
    pub a2: Vec<AgeInterval>,
    pub resolution: f64,
}

/// `A1, A2` from the flowchart outcome: ages above the relevant critical
/// age favour PAYGO over the best alternative, ages below do not.
fn age_sets(model: &Model) -> Result<(Vec<AgeInterval>, Vec<AgeInterval>)> {
    let d = &model.scenario.demography;
    let report = preference::preference_map(model, d.omega - d.a)?;
    let crit = match (report.eet_savings, report.case_label) {
        (EetSavingsFlag::AllPreferSavings, _) | (_, CaseLabel::Case6) => report.zeta_hat,
        _ => report.zeta_tilde,
    };
    Ok(match crit {
        Some(c) => (
            vec![AgeInterval {
                lo: c,
                hi: d.omega,
                lo_closed: false,
                hi_closed: true,
            }],
            vec![AgeInterval {
                lo: d.a,
                hi: c,
                lo_closed: true,
                hi_closed: false,
            }],
        ),
        None => (
            vec![AgeInterval {
                lo: d.a,
                hi: d.omega,
                lo_closed: true,
                hi_closed: true,
            }],
            Vec::new(),
        ),
    })
}

fn bounds_from(welfare: &Welfare, model: &Model) -> Result<ThetaBounds> {
    let m = welfare.m;
    let (a1, a2) = age_sets(model)?;
    let mut lower = f64::NEG_INFINITY;
    let mut upper = f64::INFINITY;
    for t in welfare.terms.iter().filter(|t| t.binding()) {
        let m2p = t.c_k.max(0.0);
        let slope = t.c_theta - m2p;
        let offset = t.c0 + m2p * m;
        if slope > 0.0 {
            lower = lower.max(-offset / slope);
        } else if slope < 0.0 {
            upper = upper.min(-offset / slope);
        } else if offset < 0.0 {
            return Err(Error::EmptyRegion(format!("cohort z = {} is insolvent for every theta", t.z)));
        }
    }
    let lo = lower.max(0.0);
    let hi = upper.min(m);
    if lo > hi {
        return Err(Error::EmptyRegion(format!("voluntary theta interval [{lo}, {hi}] is empty")));
    }
    Ok(ThetaBounds {
        lower: lo,
        upper: hi,
        theta_lower_raw: lower,
        theta_upper_raw: upper,
        a1,
        a2,
        resolution: welfare.options.z_step,
    })
}

pub fn voluntary_theta_bounds(model: &Model) -> Result<ThetaBounds> {
    bounds_from(&Welfare::new(model, WelfareOptions::new(WeightingMode::Population))?, model)
}

pub fn voluntary_objective(theta: f64, model: &Model, mode: WeightingMode) -> Result<f64> {
    let welfare = Welfare::new(model, WelfareOptions::new(mode))?;
    voluntary_objective_with(theta, &welfare, &bounds_from(&welfare, model)?)
}

pub fn voluntary_objective_with(theta: f64, welfare: &Welfare, bounds: &ThetaBounds) -> Result<f64> {
    if !(theta >= bounds.lower && theta <= bounds.upper) {
        return Err(Error::domain(format!(
            "theta = {theta} outside the voluntary admissible interval [{}, {}]",
            bounds.lower, bounds.upper
        )));
    }
    welfare
        .voluntary_sum(theta)
        .ok_or(Error::InsolventCohort { z: f64::NAN, resource: 0.0 })
}

/// Maximizes welfare over `θ` when each cohort picks its own `k`.
pub fn optimize_voluntary(model: &Model, mode: WeightingMode) -> Result<OptimalMix> {
    let welfare = Welfare::new(model, WelfareOptions::new(mode))?;
    let bounds = bounds_from(&welfare, model)?;
    let m = welfare.m;
    let mut search = Search {
        welfare: &welfare,
        evaluations: 0,
    };
    let f = |s: &mut Search, th: f64| {
        s.evaluations += 1;
        s.welfare.voluntary_sum(th).unwrap_or(f64::NEG_INFINITY)
    };
    // Coarse scan, then golden section around the best cell.
    let n = SEARCH_GRID - 1;
    let span = bounds.upper - bounds.lower;
    let mut best = (bounds.lower, f(&mut search, bounds.lower));
    for i in 1..=n {
        let th = bounds.lower + span * i as f64 / n as f64;
        let v = f(&mut search, th);
        if v > best.1 {
            best = (th, v);
        }
    }
    let cell = span / n as f64;
    let (th, v) = search.golden(&f, (best.0 - cell).max(bounds.lower), (best.0 + cell).min(bounds.upper));
    if v > best.1 {
        best = (th, v);
    }
    if !best.1.is_finite() {
        return Err(Error::EmptyRegion("no theta keeps every cohort solvent".into()));
    }
    let k_new = voluntary_k_star(best.0, model.scenario.policy.t0, model)?.representative;
    Ok(OptimalMix {
        theta_star: best.0,
        k_star: k_new,
        objective_value: best.1,
        weighting: mode,
        cap_binding: best.0 + k_new >= m - 1e-9,
        grid_step: welfare.options.z_step,
        mode: PolicyMode::Voluntary,
        diagnostics: SolverDiagnostics {
            evaluations: search.evaluations,
            grid_resolution: SEARCH_GRID,
            feasible_grid_points: 0,
        },
    })
}
