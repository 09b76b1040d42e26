//! Age-dependent preferences among PAYGO (P), EET (E) and individual
//! savings (I).
//!
//! A cohort of age `ζ` at `t0` ranks the three vehicles by the marginal
//! effect of one unit of contribution on its total resource: `M̃1(ζ)` for
//! PAYGO, `M̃2(ζ)` for EET and zero for savings. The critical ages are the
//! zero crossings of `M̃1`, `M̃1 − M̃2` and `M̃2` on the working ages.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lifecycle;
use crate::scenario::Model;

/// Values closer than this are reported as indifferent.
pub const INDIFFERENCE_BAND: f64 = 1e-12;

/// Grid used to bracket roots when no closed form applies.
pub const ROOT_SCAN_STEP: f64 = 0.25;

const ROOT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TildeCoefficients {
    pub m1t: f64,
    pub m2t: f64,
    pub m1_minus_m2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Vehicle {
    #[serde(rename = "P")]
    Paygo,
    #[serde(rename = "E")]
    Eet,
    #[serde(rename = "I")]
    Savings,
}

impl Vehicle {
    fn symbol(self) -> char {
        match self {
            Vehicle::Paygo => 'P',
            Vehicle::Eet => 'E',
            Vehicle::Savings => 'I',
        }
    }
}

/// Weak ordering: tiers from most to least preferred, indifferent inside a
/// tier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferenceOrdering {
    pub tiers: Vec<Vec<Vehicle>>,
}

impl PreferenceOrdering {
    pub fn from_values(paygo: f64, eet: f64) -> Self {
        let mut items = [(Vehicle::Paygo, paygo), (Vehicle::Eet, eet), (Vehicle::Savings, 0.0)];
        // Stable: equal values keep the P, E, I order.
        items.sort_by(|a, b| b.1.total_cmp(&a.1));
        let mut tiers: Vec<Vec<Vehicle>> = vec![vec![items[0].0]];
        for w in 0..2 {
            if (items[w].1 - items[w + 1].1).abs() < INDIFFERENCE_BAND {
                tiers.last_mut().expect("non-empty").push(items[w + 1].0);
            } else {
                tiers.push(vec![items[w + 1].0]);
            }
        }
        PreferenceOrdering { tiers }
    }

    fn rank(&self, v: Vehicle) -> usize {
        self.tiers.iter().position(|t| t.contains(&v)).expect("all vehicles ranked")
    }

    /// `a ≻ b`.
    pub fn prefers(&self, a: Vehicle, b: Vehicle) -> bool {
        self.rank(a) < self.rank(b)
    }

    pub fn indifferent(&self, a: Vehicle, b: Vehicle) -> bool {
        self.rank(a) == self.rank(b)
    }
}

impl fmt::Display for PreferenceOrdering {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tiers: Vec<String> = self
            .tiers
            .iter()
            .map(|t| t.iter().map(|v| v.symbol().to_string()).collect::<Vec<_>>().join("~"))
            .collect();
        f.write_str(&tiers.join(">"))
    }
}

/// Terminal outcomes of the preference flowchart.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CaseLabel {
    /// Savings beat EET at every working age; PAYGO beats savings at every age.
    #[serde(rename = "Case 1")]
    Case1,
    /// Savings beat EET at every working age; PAYGO vs savings flips at `ζ̂`.
    #[serde(rename = "Case 2")]
    Case2,
    /// EET beats savings at every working age; PAYGO beats EET at every age.
    #[serde(rename = "Case 3")]
    Case3,
    /// EET beats savings at every working age; PAYGO vs EET flips at `ζ̃`.
    #[serde(rename = "Case 4")]
    Case4,
    /// EET vs savings flips at `ζ̄`; no PAYGO crossing ordered after `ζ̃`.
    #[serde(rename = "Case 5")]
    Case5,
    /// EET vs savings flips at `ζ̄` and PAYGO crosses savings after EET.
    #[serde(rename = "Case 6")]
    Case6,
}

impl fmt::Display for CaseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = match self {
            CaseLabel::Case1 => 1,
            CaseLabel::Case2 => 2,
            CaseLabel::Case3 => 3,
            CaseLabel::Case4 => 4,
            CaseLabel::Case5 => 5,
            CaseLabel::Case6 => 6,
        };
        write!(f, "Case {n}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EetSavingsFlag {
    AllPreferEet,
    AllPreferSavings,
    Crossing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EetSavings {
    pub zeta_bar: Option<f64>,
    pub m2t_at_a: f64,
    pub dm2t_at_tau: f64,
    pub flag: EetSavingsFlag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub zeta: f64,
    pub coefficients: TildeCoefficients,
    pub ordering: PreferenceOrdering,
    pub case_label: CaseLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgeOrdering {
    pub zeta: f64,
    pub m1t: f64,
    pub m2t: f64,
    pub m1_minus_m2: f64,
    pub ordering: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceReport {
    pub lambda_fp: f64,
    pub lambda_ep: f64,
    pub zeta_hat: Option<f64>,
    pub zeta_tilde: Option<f64>,
    pub zeta_bar: Option<f64>,
    pub eet_savings: EetSavingsFlag,
    pub case_label: CaseLabel,
    /// Branch conditions that selected the case.
    pub conditions: Vec<String>,
    /// Extra sign changes found by the root scans (non-empty only when a
    /// time-varying support ratio breaks single crossing).
    pub diagnostics: Vec<String>,
    pub orderings: Vec<AgeOrdering>,
}

fn check_age(zeta: f64, model: &Model) -> Result<()> {
    let d = &model.scenario.demography;
    if zeta >= d.a && zeta <= d.omega {
        Ok(())
    } else {
        Err(Error::domain(format!("age {zeta} outside [{}, {}]", d.a, d.omega)))
    }
}

/// `(1−τ2)(1−e^{−r(ω−τ)})/(r·a_τ)`: EET benefit per unit balance at retirement.
fn eet_payout(model: &Model) -> f64 {
    let s = &model.scenario;
    let r = s.market.r;
    (1.0 - s.policy.tau2) * (1.0 - (-r * (s.demography.omega - s.demography.tau)).exp()) / (r * model.derived.a_tau)
}

/// `M̃1, M̃2` and their difference at age `ζ`.
pub fn tilde_coefficients(zeta: f64, model: &Model) -> Result<TildeCoefficients> {
    check_age(zeta, model)?;
    let s = &model.scenario;
    let d = &s.demography;
    if !model.support.is_constant() {
        let c = lifecycle::coefficients(s.policy.t0, d.a + s.policy.t0 - zeta, model)?;
        return Ok(TildeCoefficients {
            m1t: c.m1,
            m2t: c.m2,
            m1_minus_m2: c.m1 - c.m2,
        });
    }
    let k = &model.derived;
    let (eps, epst, lam) = (k.epsilon, k.epsilon_tilde, k.lambda);
    let tau1 = s.policy.tau1;
    let (m1t, m2t) = if zeta >= d.tau {
        (lam / eps * (eps * (d.omega - zeta)).exp_m1(), 0.0)
    } else {
        let span = d.tau - zeta;
        let m1 = ((1.0 - tau1) + (lam * (eps * (d.omega - d.tau)).exp() - lam - (1.0 - tau1)) * (eps * span).exp()) / eps;
        let m2 = eet_payout(model) / (eps - epst) * ((eps * span).exp() - (epst * span).exp())
            - (1.0 - tau1) / eps * (eps * span).exp_m1();
        (m1, m2)
    };
    Ok(TildeCoefficients {
        m1t,
        m2t,
        m1_minus_m2: m1t - m2t,
    })
}

/// `(Λ_FP, Λ_EP)`.
pub fn thresholds(model: &Model) -> (f64, f64) {
    let s = &model.scenario;
    let d = &s.demography;
    let k = &model.derived;
    let (eps, epst, r) = (k.epsilon, k.epsilon_tilde, s.market.r);
    let (tau1, tau2) = (s.policy.tau1, s.policy.tau2);
    let retire_growth = (eps * (d.omega - d.tau)).exp_m1();
    let fp = (1.0 - tau1) * (-(-eps * (d.tau - d.a)).exp_m1()) / retire_growth;
    let ep = eps * (1.0 - tau2) * (-(-r * (d.omega - d.tau)).exp_m1()) * ((epst - eps) * (d.tau - d.a)).exp_m1()
        / (r * k.a_tau * retire_growth * (epst - eps));
    (fp, ep)
}

fn bisect(f: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut flo = f(lo);
    while hi - lo > ROOT_TOL {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Sign changes of `f` on `[lo, hi)` located by a bracket scan and bisection.
fn scan_roots(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64) -> Vec<f64> {
    let n = ((hi - lo) / ROOT_SCAN_STEP).ceil() as usize;
    let mut roots = Vec::new();
    let mut x0 = lo;
    let mut f0 = f(x0);
    if f0 == 0.0 {
        roots.push(lo);
    }
    for i in 1..=n {
        let x1 = (lo + ROOT_SCAN_STEP * i as f64).min(hi);
        let f1 = f(x1);
        if f0 != 0.0 && f1 != 0.0 && (f0 < 0.0) != (f1 < 0.0) {
            roots.push(bisect(f, x0, x1));
        } else if f1 == 0.0 && x1 < hi {
            roots.push(x1);
        }
        x0 = x1;
        f0 = f1;
    }
    roots
}

fn working_roots(model: &Model, pick: fn(&TildeCoefficients) -> f64) -> Vec<f64> {
    let d = &model.scenario.demography;
    let f = |z: f64| pick(&tilde_coefficients(z, model).expect("age in range"));
    scan_roots(&f, d.a, d.tau)
}

fn closed_form_age(value: f64, model: &Model) -> Option<f64> {
    let d = &model.scenario.demography;
    if value.is_finite() {
        Some(value.clamp(d.a, d.tau - f64::EPSILON * d.tau))
    } else {
        None
    }
}

fn numeric_age(roots: &[f64]) -> Option<f64> {
    roots.first().copied()
}

/// Age at which PAYGO and savings are equally attractive, if any.
pub fn critical_age_paygo_savings(model: &Model) -> Option<f64> {
    if !model.support.is_constant() {
        return numeric_age(&working_roots(model, |c| c.m1t));
    }
    let s = &model.scenario;
    let d = &s.demography;
    let k = &model.derived;
    let (fp, _) = thresholds(model);
    if k.lambda > fp * (1.0 + 1e-12) {
        return None;
    }
    let eps = k.epsilon;
    let inner = 1.0 + (k.lambda - k.lambda * (eps * (d.omega - d.tau)).exp()) / (1.0 - s.policy.tau1);
    closed_form_age(d.tau + inner.ln() / eps, model)
}

/// Age at which PAYGO and EET are equally attractive, if any.
pub fn critical_age_paygo_eet(model: &Model) -> Option<f64> {
    if !model.support.is_constant() {
        return numeric_age(&working_roots(model, |c| c.m1_minus_m2));
    }
    let s = &model.scenario;
    let d = &s.demography;
    let k = &model.derived;
    let (_, ep) = thresholds(model);
    if k.lambda > ep * (1.0 + 1e-12) {
        return None;
    }
    let (eps, epst, r) = (k.epsilon, k.epsilon_tilde, s.market.r);
    let inner = 1.0
        - k.lambda * (eps * (d.omega - d.tau)).exp_m1() * r * (eps - epst) * k.a_tau
            / (eps * (1.0 - s.policy.tau2) * (-(-r * (d.omega - d.tau)).exp_m1()));
    closed_form_age(d.tau + inner.ln() / (eps - epst), model)
}

/// EET-vs-savings crossing and the two boundary diagnostics.
pub fn critical_age_eet_savings(model: &Model) -> Result<EetSavings> {
    let k = &model.derived;
    if !(k.epsilon_tilde > 0.0) {
        return Err(Error::Assumption(format!(
            "EET excess drift epsilon_tilde = {} must be positive",
            k.epsilon_tilde
        )));
    }
    let s = &model.scenario;
    let d = &s.demography;
    let m2t_at_a = tilde_coefficients(d.a, model)?.m2t;
    let dm2t_at_tau = (1.0 - s.policy.tau1) - eet_payout(model);
    let (zeta_bar, flag) = if m2t_at_a < 0.0 {
        (None, EetSavingsFlag::AllPreferSavings)
    } else if dm2t_at_tau <= 0.0 {
        (None, EetSavingsFlag::AllPreferEet)
    } else {
        let f = |z: f64| tilde_coefficients(z, model).expect("age in range").m2t;
        // M̃2 vanishes at τ itself; the interior crossing is bracketed by a and
        // a point just short of τ where M̃2 < 0 (positive slope at τ).
        let mut hi = d.tau - ROOT_SCAN_STEP;
        while f(hi) >= 0.0 && d.tau - hi > 1e-9 {
            hi = 0.5 * (hi + d.tau);
        }
        let root = if m2t_at_a == 0.0 { d.a } else { bisect(&f, d.a, hi) };
        (Some(root), EetSavingsFlag::Crossing)
    };
    Ok(EetSavings {
        zeta_bar,
        m2t_at_a,
        dm2t_at_tau,
        flag,
    })
}

fn case_of(model: &Model, eet: &EetSavings, zeta_hat: Option<f64>, zeta_tilde: Option<f64>) -> Result<(CaseLabel, Vec<String>)> {
    let d = &model.scenario.demography;
    let at_a = tilde_coefficients(d.a, model)?;
    // Λ ≤ Λ_FP iff M̃1(a) ≤ 0, and Λ ≤ Λ_EP iff (M̃1 − M̃2)(a) ≤ 0; the sign
    // form also covers a time-varying support ratio.
    let paygo_crosses_savings = at_a.m1t <= 0.0;
    let paygo_crosses_eet = at_a.m1_minus_m2 <= 0.0;
    let mut fired = Vec::new();
    let label = match eet.flag {
        EetSavingsFlag::AllPreferSavings => {
            fired.push("M2t(a) < 0".to_string());
            if paygo_crosses_savings {
                fired.push("Lambda <= Lambda_FP".to_string());
                CaseLabel::Case2
            } else {
                fired.push("Lambda > Lambda_FP".to_string());
                CaseLabel::Case1
            }
        }
        EetSavingsFlag::AllPreferEet => {
            fired.push("dM2t(tau) <= 0".to_string());
            if paygo_crosses_eet {
                fired.push("Lambda <= Lambda_EP".to_string());
                CaseLabel::Case4
            } else {
                fired.push("Lambda > Lambda_EP".to_string());
                CaseLabel::Case3
            }
        }
        EetSavingsFlag::Crossing => {
            fired.push("M2t(a) >= 0 and dM2t(tau) > 0".to_string());
            match (zeta_hat, zeta_tilde) {
                (Some(h), Some(t)) if paygo_crosses_savings && h > t => {
                    fired.push("Lambda <= Lambda_FP and zeta_hat > zeta_tilde".to_string());
                    CaseLabel::Case6
                }
                _ => {
                    fired.push("Lambda > Lambda_FP or zeta_hat <= zeta_tilde".to_string());
                    CaseLabel::Case5
                }
            }
        }
    };
    Ok((label, fired))
}

/// Ordering at age `ζ` and the scenario's flowchart outcome.
pub fn classify(zeta: f64, model: &Model) -> Result<Classification> {
    let coefficients = tilde_coefficients(zeta, model)?;
    let eet = critical_age_eet_savings(model)?;
    let (case_label, _) = case_of(model, &eet, critical_age_paygo_savings(model), critical_age_paygo_eet(model))?;
    Ok(Classification {
        zeta,
        coefficients,
        ordering: PreferenceOrdering::from_values(coefficients.m1t, coefficients.m2t),
        case_label,
    })
}

fn age_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    let mut v: Vec<f64> = (0..=n).map(|i| lo + step * i as f64).collect();
    if hi - v[n] > 1e-9 {
        v.push(hi);
    }
    v
}

pub fn preference_map(model: &Model, step: f64) -> Result<PreferenceReport> {
    if !(step > 0.0) {
        return Err(Error::domain(format!("age step must be positive, got {step}")));
    }
    let d = &model.scenario.demography;
    let (lambda_fp, lambda_ep) = thresholds(model);
    let zeta_hat = critical_age_paygo_savings(model);
    let zeta_tilde = critical_age_paygo_eet(model);
    let eet = critical_age_eet_savings(model)?;
    let (case_label, conditions) = case_of(model, &eet, zeta_hat, zeta_tilde)?;

    let mut diagnostics = Vec::new();
    if !model.support.is_constant() {
        for (name, roots) in [
            ("zeta_hat", working_roots(model, |c| c.m1t)),
            ("zeta_tilde", working_roots(model, |c| c.m1_minus_m2)),
        ] {
            if roots.len() > 1 {
                diagnostics.push(format!("{name}: {} sign changes at {:?}; reporting the first", roots.len(), roots));
            }
        }
    }

    let orderings = age_grid(d.a, d.omega, step)
        .into_iter()
        .map(|zeta| {
            let c = tilde_coefficients(zeta, model)?;
            Ok(AgeOrdering {
                zeta,
                m1t: c.m1t,
                m2t: c.m2t,
                m1_minus_m2: c.m1_minus_m2,
                ordering: PreferenceOrdering::from_values(c.m1t, c.m2t).to_string(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(PreferenceReport {
        lambda_fp,
        lambda_ep,
        zeta_hat,
        zeta_tilde,
        zeta_bar: eet.zeta_bar,
        eet_savings: eet.flag,
        case_label,
        conditions,
        diagnostics,
        orderings,
    })
}
