//! Two-parameter grids over scenario fields, evaluating one headline target
//! per cell. Cells that fail validation or have no answer are kept as NaN
//! with a reason so the grid stays rectangular.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::government::{optimize_mix, WeightingMode};
use crate::preference::{critical_age_paygo_eet, critical_age_paygo_savings};
use crate::scenario::{Model, Scenario};

/// Pseudo-parameter routed through [`mortality_scale`].
pub const MORTALITY_DELTA: &str = "mortality.delta";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepTarget {
    ZetaHat,
    ZetaTilde,
    ThetaStar,
    KStar,
    ThetaStarEqual,
    KStarEqual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub path: String,
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
}

impl SweepAxis {
    pub fn values(&self) -> Vec<f64> {
        let n = self.steps;
        (0..n)
            .map(|i| {
                if i + 1 == n {
                    self.hi
                } else {
                    self.lo + (self.hi - self.lo) * i as f64 / (n - 1) as f64
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub param1: SweepAxis,
    pub param2: SweepAxis,
    pub target: SweepTarget,
}

impl SweepSpec {
    pub fn from_json_str(text: &str) -> Result<SweepSpec> {
        let spec: SweepSpec = serde_json::from_str(text).map_err(|e| match e.classify() {
            serde_json::error::Category::Data => Error::Schema(format!("sweep spec: {e}")),
            _ => Error::Parse(format!("sweep spec: {e}")),
        })?;
        spec.check()?;
        Ok(spec)
    }

    pub fn check(&self) -> Result<()> {
        for (name, axis) in [("param1", &self.param1), ("param2", &self.param2)] {
            if axis.steps < 2 {
                return Err(Error::Config(format!("{name}.steps must be at least 2, got {}", axis.steps)));
            }
            if !(axis.lo.is_finite() && axis.hi.is_finite()) {
                return Err(Error::Config(format!("{name} range must be finite")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub p1: f64,
    pub p2: f64,
    pub value: f64,
    /// Empty when `value` is finite.
    pub reason: String,
}

/// Scales both Makeham mortality parameters by `delta` (smaller means
/// longer lives).
pub fn mortality_scale(s: &Scenario, delta: f64) -> Result<Scenario> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::domain(format!("mortality scale must be positive, got {delta}")));
    }
    let mut out = s.clone();
    out.demography.makeham_a *= delta;
    out.demography.makeham_b *= delta;
    Ok(out)
}

fn canonical_segment(seg: &str) -> &str {
    match seg {
        "demo" => "demography",
        "pref" => "preference",
        "w0" => "W0",
        "makeham_a" => "A",
        "makeham_b" => "B",
        other => other,
    }
}

/// Sets the numeric field at a dotted path such as `demo.rho` or
/// `market.gamma`. The baby-boom block is reachable as
/// `demography.babyboom.kappa` when present.
pub fn apply_parameter(s: &Scenario, path: &str, value: f64) -> Result<Scenario> {
    if path == MORTALITY_DELTA {
        return mortality_scale(s, value);
    }
    let mut root = serde_json::to_value(s).map_err(|e| Error::Config(e.to_string()))?;
    let mut node = &mut root;
    let segments: Vec<&str> = path.split('.').map(canonical_segment).collect();
    for seg in &segments {
        node = node
            .get_mut(*seg)
            .ok_or_else(|| Error::Config(format!("unknown parameter path '{path}'")))?;
    }
    if !node.is_number() {
        return Err(Error::Config(format!("parameter path '{path}' is not numeric")));
    }
    *node = serde_json::Number::from_f64(value)
        .map(Value::Number)
        .ok_or_else(|| Error::Config(format!("cannot set '{path}' to {value}")))?;
    serde_json::from_value(root).map_err(|e| Error::Schema(e.to_string()))
}

/// Evaluates `target` for one scenario; `Ok(None)` means no answer exists
/// (no critical age), which is not an error.
pub fn evaluate_target(s: Scenario, target: SweepTarget) -> Result<Option<f64>> {
    let model = Model::new(s)?;
    Ok(match target {
        SweepTarget::ZetaHat => critical_age_paygo_savings(&model),
        SweepTarget::ZetaTilde => critical_age_paygo_eet(&model),
        SweepTarget::ThetaStar => Some(optimize_mix(&model, WeightingMode::Population)?.theta_star),
        SweepTarget::KStar => Some(optimize_mix(&model, WeightingMode::Population)?.k_star),
        SweepTarget::ThetaStarEqual => Some(optimize_mix(&model, WeightingMode::Equal)?.theta_star),
        SweepTarget::KStarEqual => Some(optimize_mix(&model, WeightingMode::Equal)?.k_star),
    })
}

/// Row order is `param1` outer, `param2` inner, regardless of scheduling.
pub fn run_sweep(base: &Scenario, spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    spec.check()?;
    // Paths are checked once up front so a typo is an error, not a grid of
    // NaN cells.
    apply_parameter(base, &spec.param1.path, spec.param1.lo)?;
    apply_parameter(base, &spec.param2.path, spec.param2.lo)?;
    let cells: Vec<(f64, f64)> = spec
        .param1
        .values()
        .into_iter()
        .flat_map(|p1| spec.param2.values().into_iter().map(move |p2| (p1, p2)))
        .collect();
    Ok(cells
        .into_par_iter()
        .map(|(p1, p2)| {
            let outcome = apply_parameter(base, &spec.param1.path, p1)
                .and_then(|s| apply_parameter(&s, &spec.param2.path, p2))
                .and_then(|s| evaluate_target(s, spec.target));
            let (value, reason) = match outcome {
                Ok(Some(v)) => (v, String::new()),
                Ok(None) => (f64::NAN, "no critical age in the working span".to_string()),
                Err(e) => (f64::NAN, e.to_string()),
            };
            SweepRow { p1, p2, value, reason }
        })
        .collect())
}
