//! Model parameters, their standing assumptions, and the derived constants.
//!
//! [`Scenario`] is the raw parameter bundle as read from JSON. [`Model`] is a
//! validated scenario together with its [`DerivedConstants`] and the support
//! ratio function; every computation downstream takes a `&Model`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::demography::{self, SupportRatioFn};
use crate::error::{Error, Result};
use crate::lifecycle;

/// Margin for the drift hypotheses `ε ≠ 0` and `ε̃ ≠ ε`.
pub const DRIFT_MARGIN: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketParams {
    pub r: f64,
    pub mu: f64,
    pub sigma: f64,
    pub gamma: f64,
    pub xi: f64,
    pub alpha: f64,
    pub beta: f64,
    #[serde(rename = "W0")]
    pub w0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BabyBoomParams {
    pub t1: f64,
    pub t2: f64,
    pub n1: f64,
    pub nm: f64,
    pub kappa: f64,
    pub rho1: f64,
    pub rho2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemographyParams {
    pub a: f64,
    pub tau: f64,
    pub omega: f64,
    pub n0: f64,
    pub rho: f64,
    #[serde(rename = "A")]
    pub makeham_a: f64,
    #[serde(rename = "B")]
    pub makeham_b: f64,
    pub c: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub babyboom: Option<BabyBoomParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyParams {
    pub theta0: f64,
    pub k0: f64,
    pub m: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub t0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreferenceParams {
    pub lambda: f64,
    pub delta0: f64,
    pub delta1: f64,
    pub delta2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub market: MarketParams,
    pub demography: DemographyParams,
    pub policy: PolicyParams,
    pub preference: PreferenceParams,
}

/// Risk class of a cohort at the re-selection time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CohortClass {
    Future,
    Worker,
    Retiree,
}

impl Scenario {
    pub fn us_baseline() -> Scenario {
        Scenario {
            market: MarketParams {
                r: 0.02,
                mu: 0.1,
                sigma: 0.26,
                gamma: 0.02,
                xi: 0.09,
                alpha: 0.06,
                beta: 0.12,
                w0: 1.0,
            },
            demography: DemographyParams {
                a: 30.0,
                tau: 65.0,
                omega: 100.0,
                n0: 10.0,
                rho: -0.005,
                makeham_a: 2.2e-5,
                makeham_b: 2.7e-6,
                c: 1.124,
                babyboom: None,
            },
            policy: PolicyParams {
                theta0: 0.08,
                k0: 0.12,
                m: 0.25,
                tau1: 0.25,
                tau2: 0.0,
                t0: 0.0,
            },
            preference: PreferenceParams {
                lambda: 1.5,
                delta0: -2.8,
                delta1: -2.9,
                delta2: -3.0,
            },
        }
    }

    pub fn china_baseline() -> Scenario {
        let mut s = Scenario::us_baseline();
        s.market.gamma = 0.03;
        s.market.xi = 0.14;
        s.market.mu = 0.08;
        s.market.sigma = 0.2;
        s.market.alpha = 0.05;
        s.market.beta = 0.09;
        s.demography.rho = -0.004;
        s.demography.a = 25.0;
        s.demography.tau = 60.0;
        s.demography.omega = 95.0;
        s.policy.theta0 = 0.16;
        s.policy.k0 = 0.04;
        s
    }

    /// U.S. baseline with the logistic baby boom between t = -40 and t = -20.
    pub fn babyboom_fixture() -> Scenario {
        let mut s = Scenario::us_baseline();
        s.demography.babyboom = Some(BabyBoomParams {
            t1: -40.0,
            t2: -20.0,
            n1: 11.91,
            nm: 100.0,
            kappa: 0.05,
            rho1: -0.0025,
            rho2: -0.005,
        });
        s
    }

    pub fn from_json_str(text: &str) -> Result<Scenario> {
        let s: Scenario = serde_json::from_str(text).map_err(json_error)?;
        s.check_schema()?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Type-level invariants. Market ordering assumptions are left to
    /// [`validate`] so that a file with e.g. `mu < r` still loads.
    pub fn check_schema(&self) -> Result<()> {
        let schema = |cond: bool, msg: &str| if cond { Ok(()) } else { Err(Error::Schema(msg.to_string())) };
        let m = &self.market;
        let d = &self.demography;
        let p = &self.policy;
        let f = &self.preference;
        let all = [
            m.r, m.mu, m.sigma, m.gamma, m.xi, m.alpha, m.beta, m.w0, d.a, d.tau, d.omega, d.n0, d.rho, d.makeham_a,
            d.makeham_b, d.c, p.theta0, p.k0, p.m, p.tau1, p.tau2, p.t0, f.lambda, f.delta0, f.delta1, f.delta2,
        ];
        schema(all.iter().all(|v| v.is_finite()), "every parameter must be a finite number")?;
        schema(m.w0 > 0.0, "market.W0 must be positive")?;
        schema(m.xi >= 0.0 && m.beta >= 0.0, "market.xi and market.beta must be non-negative")?;
        schema(d.a < d.tau && d.tau < d.omega, "demography requires a < tau < omega")?;
        schema(d.c > 1.0, "demography.c must exceed 1")?;
        schema(d.makeham_a >= 0.0 && d.makeham_b >= 0.0, "demography.A and demography.B must be non-negative")?;
        schema(d.n0 > 0.0, "demography.n0 must be positive")?;
        if let Some(bb) = &d.babyboom {
            let vals = [bb.t1, bb.t2, bb.n1, bb.nm, bb.kappa, bb.rho1, bb.rho2];
            schema(vals.iter().all(|v| v.is_finite()), "babyboom parameters must be finite")?;
            schema(bb.t1 <= bb.t2, "babyboom requires t1 <= t2")?;
            schema(0.0 < bb.n1 && bb.n1 < bb.nm, "babyboom requires 0 < n1 < nm")?;
            schema(bb.kappa > 0.0, "babyboom.kappa must be positive")?;
        }
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        schema(unit(p.theta0) && unit(p.k0), "policy.theta0 and policy.k0 must lie in [0, 1]")?;
        schema(unit(p.m), "policy.m must lie in [0, 1]")?;
        schema(p.theta0 + p.k0 <= p.m + 1e-15, "cap constraint theta0 + k0 <= m violated")?;
        schema((0.0..1.0).contains(&p.tau1) && (0.0..1.0).contains(&p.tau2), "policy.tau1 and policy.tau2 must lie in [0, 1)")?;
        schema(f.lambda > 0.0, "preference.lambda must be positive")?;
        for (name, v) in [("delta0", f.delta0), ("delta1", f.delta1), ("delta2", f.delta2)] {
            if !(v < 1.0 && v != 0.0) {
                return Err(Error::Schema(format!("preference.{name} must be < 1 and non-zero, got {v}")));
            }
        }
        Ok(())
    }

    /// Cohort class by age `a + t0 - z` at the re-selection time.
    pub fn cohort_class(&self, z: f64) -> CohortClass {
        let d = &self.demography;
        let zeta = d.a + self.policy.t0 - z;
        if zeta < d.a {
            CohortClass::Future
        } else if zeta < d.tau {
            CohortClass::Worker
        } else {
            CohortClass::Retiree
        }
    }

    /// CRRA exponent of the cohort entering at `z`.
    pub fn delta_for_entry(&self, z: f64) -> f64 {
        match self.cohort_class(z) {
            CohortClass::Future => self.preference.delta0,
            CohortClass::Worker => self.preference.delta1,
            CohortClass::Retiree => self.preference.delta2,
        }
    }

    /// Growth rate of entrants after the re-selection time.
    pub fn future_growth_rate(&self) -> f64 {
        match &self.demography.babyboom {
            Some(bb) => bb.rho2,
            None => self.demography.rho,
        }
    }

    pub fn finiteness_margin(&self) -> f64 {
        let m = &self.market;
        let d0 = self.preference.delta0;
        m.r - self.future_growth_rate() - d0 * (m.gamma + 0.5 * (d0 - 1.0) * m.xi * m.xi)
    }
}

fn json_error(e: serde_json::Error) -> Error {
    use serde_json::error::Category;
    match e.classify() {
        Category::Data => Error::Schema(e.to_string()),
        Category::Io => Error::Io(e.into()),
        Category::Syntax | Category::Eof => Error::Parse(e.to_string()),
    }
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)?;
    Scenario::from_json_str(&text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedConstants {
    pub nu: f64,
    pub epsilon: f64,
    pub epsilon_tilde: f64,
    /// Support ratio at `t0` (the constant Λ without a baby boom).
    pub lambda: f64,
    pub a_tau: f64,
    /// `L(z;z)` for the future-entrant exponent `delta0`.
    pub l0: f64,
    pub m01: f64,
    pub m02: f64,
    pub m03: f64,
    /// EET Sharpe ratio minus the risky-asset Sharpe ratio.
    pub sharpe_gap: f64,
    pub finiteness_margin: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub scenario: Scenario,
    pub derived: DerivedConstants,
    pub support: SupportRatioFn,
}

fn ordering(cond: bool, msg: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::OrderingViolation(msg.to_string()))
    }
}

impl Model {
    pub fn new(scenario: Scenario) -> Result<Model> {
        scenario.check_schema()?;
        let m = &scenario.market;
        ordering(m.r > 0.0, "risk-free rate r must be positive")?;
        ordering(m.mu > m.r, "risky drift must exceed the risk-free rate (mu > r)")?;
        ordering(m.sigma > 0.0, "risky volatility sigma must be positive")?;
        let nu = (m.mu - m.r) / m.sigma;
        let eet_sharpe = if m.beta > 0.0 {
            (m.alpha - m.r) / m.beta
        } else if m.alpha > m.r {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        };
        ordering(
            eet_sharpe > nu,
            "EET Sharpe dominance (alpha - r)/beta > (mu - r)/sigma violated",
        )?;
        let epsilon = m.gamma - m.r - m.xi * nu;
        let epsilon_tilde = m.alpha - m.r - m.beta * nu;
        if epsilon.abs() < DRIFT_MARGIN {
            return Err(Error::DegenerateDrift(format!("epsilon = gamma - r - xi*nu = {epsilon:e} vanishes")));
        }
        if (epsilon_tilde - epsilon).abs() < DRIFT_MARGIN {
            return Err(Error::DegenerateDrift(format!(
                "epsilon_tilde = {epsilon_tilde:e} coincides with epsilon"
            )));
        }
        let margin = scenario.finiteness_margin();
        if !(margin > 0.0) {
            return Err(Error::UtilityExplosion { margin });
        }

        let mut warnings = Vec::new();
        if scenario.policy.tau1 <= scenario.policy.tau2 {
            warnings.push(format!(
                "tau1 = {} does not exceed tau2 = {}",
                scenario.policy.tau1, scenario.policy.tau2
            ));
        }

        let support = SupportRatioFn::new(&scenario.demography);
        let a_tau = demography::annuity_factor(&scenario.demography, m.r)?;
        let t0 = scenario.policy.t0;
        let derived = DerivedConstants {
            nu,
            epsilon,
            epsilon_tilde,
            lambda: support.eval(t0),
            a_tau,
            l0: 0.0,
            m01: 0.0,
            m02: 0.0,
            m03: 0.0,
            sharpe_gap: eet_sharpe - nu,
            finiteness_margin: margin,
            warnings,
        };
        let mut model = Model {
            scenario,
            derived,
            support,
        };
        let entry = lifecycle::coefficients(t0, t0, &model)?;
        model.derived.l0 = lifecycle::coeff_l(t0, t0, model.scenario.preference.delta0, &model)?;
        model.derived.m01 = entry.m1;
        model.derived.m02 = entry.m2;
        model.derived.m03 = entry.m3;
        Ok(model)
    }

    pub fn s(&self) -> &Scenario {
        &self.scenario
    }

    /// Salary level `W0·e^{γ t0}` at the re-selection time.
    pub fn w_at_t0(&self) -> f64 {
        let m = &self.scenario.market;
        m.w0 * (m.gamma * self.scenario.policy.t0).exp()
    }

    /// Oldest living entry time at `t0`.
    pub fn z_min(&self) -> f64 {
        let d = &self.scenario.demography;
        self.scenario.policy.t0 - d.omega + d.a
    }

    /// Entry time of the cohort retiring exactly at `t0`.
    pub fn z_retire(&self) -> f64 {
        let d = &self.scenario.demography;
        self.scenario.policy.t0 - d.tau + d.a
    }
}

pub fn validate(s: &Scenario) -> Result<DerivedConstants> {
    Model::new(s.clone()).map(|m| m.derived)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn us_constants() {
        let d = validate(&Scenario::us_baseline()).unwrap();
        assert!((d.nu - 0.307_692_307_692_307_7).abs() < 1e-12);
        assert!((d.epsilon - (0.02 - 0.02 - 0.09 * d.nu)).abs() < 1e-15);
        assert!((d.epsilon + 0.027_692_307_692_307_7).abs() < 1e-12);
        assert!((d.epsilon_tilde - 0.003_076_923_076_923_1).abs() < 1e-12);
        assert!(d.a_tau > 0.0 && d.lambda > 0.0 && d.m03 >= 0.0);
        assert!(d.warnings.is_empty());
    }

    #[test]
    fn finiteness_margin_us() {
        let s = Scenario::us_baseline();
        let expected = 0.02 + 0.005 + 2.8 * (0.02 + 0.5 * (-3.8) * 0.0081);
        assert!((s.finiteness_margin() - expected).abs() < 1e-15);
        assert!((s.finiteness_margin() - 0.0379).abs() < 1e-4);
    }

    #[test]
    fn degenerate_drift_is_rejected() {
        let mut s = Scenario::us_baseline();
        let nu = (s.market.mu - s.market.r) / s.market.sigma;
        s.market.gamma = s.market.r + s.market.xi * nu;
        assert!(matches!(validate(&s), Err(Error::DegenerateDrift(_))));
    }

    #[test]
    fn ordering_violations() {
        let mut s = Scenario::us_baseline();
        s.market.mu = 0.01;
        match validate(&s) {
            Err(Error::OrderingViolation(msg)) => assert!(msg.contains("mu > r")),
            other => panic!("{other:?}"),
        }
        let mut s = Scenario::us_baseline();
        s.market.alpha = 0.03;
        assert!(matches!(validate(&s), Err(Error::OrderingViolation(_))));
    }

    #[test]
    fn explosion_is_rejected() {
        let mut s = Scenario::us_baseline();
        s.demography.rho = 0.05;
        assert!(matches!(validate(&s), Err(Error::UtilityExplosion { .. })));
    }

    #[test]
    fn tax_order_is_only_a_warning() {
        let mut s = Scenario::us_baseline();
        s.policy.tau2 = 0.3;
        let d = validate(&s).unwrap();
        assert_eq!(d.warnings.len(), 1);
    }

    #[test]
    fn schema_errors_name_the_field() {
        let mut v: serde_json::Value = serde_json::from_str(&Scenario::us_baseline().to_json()).unwrap();
        v["market"].as_object_mut().unwrap().remove("mu");
        match Scenario::from_json_str(&v.to_string()) {
            Err(Error::Schema(msg)) => assert!(msg.contains("mu"), "{msg}"),
            other => panic!("{other:?}"),
        }
        let mut s = Scenario::us_baseline();
        s.policy.k0 = 0.2;
        match Scenario::from_json_str(&s.to_json()) {
            Err(Error::Schema(msg)) => assert!(msg.contains("cap")),
            other => panic!("{other:?}"),
        }
        assert!(matches!(Scenario::from_json_str("{\"market\": "), Err(Error::Parse(_))));
    }

    #[test]
    fn json_uses_mathematical_symbol_names() {
        let v: serde_json::Value = serde_json::from_str(&Scenario::china_baseline().to_json()).unwrap();
        assert_eq!(v["market"]["W0"], 1.0);
        assert_eq!(v["demography"]["A"], 2.2e-5);
        assert!(v["demography"].get("babyboom").is_none());
    }

    #[test]
    fn delta_mapping() {
        let s = Scenario::us_baseline();
        assert_eq!(s.delta_for_entry(1.0), -2.8);
        assert_eq!(s.delta_for_entry(0.0), -2.9);
        assert_eq!(s.delta_for_entry(-34.9), -2.9);
        assert_eq!(s.delta_for_entry(-35.0), -3.0);
        assert_eq!(s.delta_for_entry(-70.0), -3.0);
    }
}
