use std::path::Path;

use penmix::demography::entrants;
use penmix::government::{optimize_mix, optimize_voluntary, OptimalMix, WeightingMode};
use penmix::lifecycle::expected_paths;
use penmix::montecarlo::{verify_value_function, SimulationConfig, VerificationRow};
use penmix::preference::{preference_map, CaseLabel, EetSavingsFlag, PreferenceReport};
use penmix::sweep::{run_sweep, SweepSpec};
use penmix::{load_scenario, DerivedConstants, Error, Model, Result, Scenario};
use serde::Serialize;

use crate::output::{num, Sink};

pub const PATHS_HEADER: [&str; 5] = ["t", "EX", "EY", "Epi", "EC"];
pub const ORDERINGS_HEADER: [&str; 5] = ["zeta", "M1t", "M2t", "M1mM2", "ordering"];
pub const SWEEP_HEADER: [&str; 4] = ["p1", "p2", "value", "reason"];
pub const BABYBOOM_HEADER: [&str; 4] = ["t", "n", "Lambda", "inv_Lambda"];

fn model(path: &Path) -> Result<Model> {
    Model::new(load_scenario(path)?)
}

fn show(x: Option<f64>) -> String {
    x.map_or("none".into(), |v| format!("{v:.4}"))
}

#[derive(Serialize)]
struct Validation<'a> {
    valid: bool,
    derived: &'a DerivedConstants,
}

pub fn validate(scenario: &Path, sink: &mut Sink) -> Result<()> {
    let m = model(scenario)?;
    let d = &m.derived;
    sink.json("validate.json", &Validation { valid: true, derived: d })?;
    println!("valid scenario");
    println!("  nu = {:.6}  epsilon = {:.6}  epsilon_tilde = {:.6}", d.nu, d.epsilon, d.epsilon_tilde);
    println!("  Lambda = {:.6}  a_tau = {:.6}  margin = {:.6}", d.lambda, d.a_tau, d.finiteness_margin);
    for w in &d.warnings {
        println!("  warning: {w}");
    }
    Ok(())
}

/// The report without its per-age table.
#[derive(Serialize)]
struct CriticalAges<'a> {
    zeta_hat: Option<f64>,
    zeta_tilde: Option<f64>,
    zeta_bar: Option<f64>,
    lambda_fp: f64,
    lambda_ep: f64,
    eet_savings: EetSavingsFlag,
    case_label: CaseLabel,
    conditions: &'a [String],
    diagnostics: &'a [String],
}

impl<'a> From<&'a PreferenceReport> for CriticalAges<'a> {
    fn from(r: &'a PreferenceReport) -> Self {
        CriticalAges {
            zeta_hat: r.zeta_hat,
            zeta_tilde: r.zeta_tilde,
            zeta_bar: r.zeta_bar,
            lambda_fp: r.lambda_fp,
            lambda_ep: r.lambda_ep,
            eet_savings: r.eet_savings,
            case_label: r.case_label,
            conditions: &r.conditions,
            diagnostics: &r.diagnostics,
        }
    }
}

fn print_ages(r: &PreferenceReport) {
    println!("{}: zeta_hat = {}, zeta_tilde = {}, zeta_bar = {}", r.case_label, show(r.zeta_hat), show(r.zeta_tilde), show(r.zeta_bar));
    for d in &r.diagnostics {
        println!("  note: {d}");
    }
}

pub fn critical_ages(scenario: &Path, sink: &mut Sink) -> Result<()> {
    let r = preference_map(&model(scenario)?, 1.0)?;
    sink.json("critical_ages.json", &CriticalAges::from(&r))?;
    print_ages(&r);
    Ok(())
}

pub fn classify(scenario: &Path, step: f64, sink: &mut Sink) -> Result<()> {
    let r = preference_map(&model(scenario)?, step)?;
    let rows: Vec<Vec<String>> = r
        .orderings
        .iter()
        .map(|o| vec![num(o.zeta), num(o.m1t), num(o.m2t), num(o.m1_minus_m2), o.ordering.clone()])
        .collect();
    sink.csv("classify.csv", &ORDERINGS_HEADER, &rows)?;
    sink.json("critical_ages.json", &CriticalAges::from(&r))?;
    print_ages(&r);
    if let (Some(first), Some(last)) = (r.orderings.first(), r.orderings.last()) {
        println!("  age {:.2}: {}  ...  age {:.2}: {}", first.zeta, first.ordering, last.zeta, last.ordering);
    }
    Ok(())
}

pub fn optimize(scenario: &Path, mode: WeightingMode, voluntary: bool, sink: &mut Sink) -> Result<()> {
    let m = model(scenario)?;
    let mix: OptimalMix = if voluntary { optimize_voluntary(&m, mode)? } else { optimize_mix(&m, mode)? };
    sink.json("optimize.json", &mix)?;
    println!(
        "theta* = {:.4}  k* = {:.4}  (cap {})",
        mix.theta_star,
        mix.k_star,
        if mix.cap_binding { "binding" } else { "slack" }
    );
    Ok(())
}

pub fn paths(scenario: &Path, zeta: f64, theta: f64, k: f64, step: f64, sink: &mut Sink) -> Result<()> {
    let m = model(scenario)?;
    let p = &m.scenario.policy;
    if !(theta >= 0.0 && k >= 0.0 && theta + k <= p.m) {
        return Err(Error::EmptyRegion(format!(
            "rates must satisfy theta >= 0, k >= 0 and theta + k <= m = {}, got theta = {theta}, k = {k}",
            p.m
        )));
    }
    let z = m.scenario.demography.a + p.t0 - zeta;
    let rows = expected_paths(z, &m, theta, k, step)?;
    let table: Vec<Vec<String>> = rows.iter().map(|r| vec![num(r.t), num(r.ex), num(r.ey), num(r.epi), num(r.ec)]).collect();
    sink.csv("paths.csv", &PATHS_HEADER, &table)?;
    let low = rows.iter().min_by(|a, b| a.ex.total_cmp(&b.ex)).expect("grid is never empty");
    println!("cohort aged {zeta} at t0 (entry z = {z}): {} rows", rows.len());
    println!("  min E[X] = {:.6} at t = {:.2}", low.ex, low.t);
    Ok(())
}

pub fn sweep(scenario: &Path, spec: &Path, sink: &mut Sink) -> Result<()> {
    let base = load_scenario(scenario)?;
    Model::new(base.clone())?;
    let spec = SweepSpec::from_json_str(&std::fs::read_to_string(spec)?)?;
    let rows = run_sweep(&base, &spec)?;
    let table: Vec<Vec<String>> = rows.iter().map(|r| vec![num(r.p1), num(r.p2), num(r.value), r.reason.clone()]).collect();
    sink.csv("sweep.csv", &SWEEP_HEADER, &table)?;
    let feasible = rows.iter().filter(|r| r.value.is_finite()).count();
    println!("{} x {} grid: {feasible} of {} cells feasible", spec.param1.steps, spec.param2.steps, rows.len());
    if feasible == 0 {
        return Err(Error::EmptyRegion("no cell of the sweep grid is feasible".into()));
    }
    Ok(())
}

#[derive(Serialize)]
struct Verification<'a> {
    pass: bool,
    config: &'a SimulationConfig,
    rows: &'a [VerificationRow],
}

/// Returns whether every cohort passed.
pub fn verify(scenario: &Path, ages: &[f64], n_paths: usize, dt: f64, seed: u64, sink: &mut Sink) -> Result<bool> {
    let m = model(scenario)?;
    let s = &m.scenario;
    let cohorts: Vec<f64> = ages.iter().map(|age| s.demography.a + s.policy.t0 - age).collect();
    let base = SimulationConfig {
        n_paths,
        dt,
        seed,
        ..SimulationConfig::for_cohort(&m, s.policy.t0)
    };
    let rows = verify_value_function(&m, &cohorts, &base)?;
    let pass = rows.iter().all(|r| r.pass);
    sink.json(
        "verify.json",
        &Verification {
            pass,
            config: &base,
            rows: &rows,
        },
    )?;
    let mark = |b: bool| if b { "PASS" } else { "FAIL" };
    println!("{:>8} {:>8} {:>8} {:>8} {:>8} {:>8}", "z", "utility", "terminal", "Y(t0)", "wealth", "overall");
    for r in &rows {
        println!(
            "{:>8.2} {:>8} {:>8} {:>8} {:>8} {:>8}",
            r.z,
            mark(r.utility_pass),
            mark(r.terminal_pass),
            mark(r.y_pass),
            mark(r.wealth_pass),
            mark(r.pass)
        );
    }
    Ok(pass)
}

#[derive(Serialize)]
struct Babyboom<'a> {
    zeta_hat: Option<f64>,
    zeta_tilde: Option<f64>,
    lambda_min: f64,
    lambda_max: f64,
    inv_lambda_before: f64,
    inv_lambda_after: f64,
    diagnostics: &'a [String],
}

pub fn babyboom(scenario: &Path, step: f64, sink: &mut Sink) -> Result<()> {
    let s: Scenario = load_scenario(scenario)?;
    if s.demography.babyboom.is_none() {
        return Err(Error::Schema("babyboom requires demography.babyboom parameters".into()));
    }
    if !(step > 0.0) {
        return Err(Error::Config(format!("--step must be positive, got {step}")));
    }
    let m = Model::new(s)?;
    let (lo, hi) = m.support.varying_window().expect("babyboom mode");
    // Pad by ten years so both constant tails show.
    let (lo, hi) = (lo - 10.0, hi + 10.0);
    let n = ((hi - lo) / step).round().max(1.0) as usize;
    let d = &m.scenario.demography;
    let table: Vec<Vec<String>> = (0..=n)
        .map(|i| {
            let t = lo + (hi - lo) * i as f64 / n as f64;
            let lambda = m.support.eval(t);
            vec![num(t), num(entrants(t, d)), num(lambda), num(1.0 / lambda)]
        })
        .collect();
    sink.csv("babyboom.csv", &BABYBOOM_HEADER, &table)?;
    let r = preference_map(&m, 1.0)?;
    let (lambda_min, lambda_max) = m.support.range();
    let summary = Babyboom {
        zeta_hat: r.zeta_hat,
        zeta_tilde: r.zeta_tilde,
        lambda_min,
        lambda_max,
        inv_lambda_before: 1.0 / m.support.eval(lo),
        inv_lambda_after: 1.0 / m.support.eval(hi),
        diagnostics: &r.diagnostics,
    };
    sink.json("babyboom.json", &summary)?;
    println!(
        "Lambda in [{lambda_min:.4}, {lambda_max:.4}], 1/Lambda {:.4} before and {:.4} after",
        summary.inv_lambda_before, summary.inv_lambda_after
    );
    print_ages(&r);
    Ok(())
}
