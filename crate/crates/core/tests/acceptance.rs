//! Headline acceptance checks. Runs sequentially in one process so runtimes
//! are measured without contention, printing one PASS/FAIL line each.

use std::time::{Duration, Instant};

use penmix::government::{
    optimize_mix, optimize_voluntary, voluntary_k_star, voluntary_objective_with, voluntary_theta_bounds, Welfare,
    WelfareOptions, WeightingMode,
};
use penmix::lifecycle::{coeff_l, coefficients, discount_weight, value_function};
use penmix::montecarlo::{simulate_cohort, verify_value_function, SimulationConfig};
use penmix::preference::{critical_age_paygo_eet, critical_age_paygo_savings, preference_map, CaseLabel, EetSavingsFlag};
use penmix::{Model, Scenario};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(cond: bool, what: String) -> Outcome {
    Outcome { pass: cond, detail: what }
}

fn all(parts: Vec<Outcome>) -> Outcome {
    Outcome {
        pass: parts.iter().all(|p| p.pass),
        detail: parts
            .iter()
            .map(|p| format!("{}{}", if p.pass { "" } else { "!" }, p.detail))
            .collect::<Vec<_>>()
            .join("; "),
    }
}

fn near(name: &str, got: f64, want: f64, tol: f64) -> Outcome {
    check((got - want).abs() <= tol, format!("{name} = {got:.6} (want {want} ± {tol})"))
}

fn us() -> Model {
    Model::new(Scenario::us_baseline()).unwrap()
}

fn cn() -> Model {
    Model::new(Scenario::china_baseline()).unwrap()
}

fn c1() -> Outcome {
    let inv = 1.0 / us().derived.lambda;
    near("1/Lambda", inv, 0.7271, 5e-4)
}

fn c2() -> Outcome {
    let m = us();
    let report = preference_map(&m, 1.0).unwrap();
    all(vec![
        near("zeta_hat", report.zeta_hat.unwrap_or(f64::NAN), 37.5596, 0.02),
        near("zeta_tilde", report.zeta_tilde.unwrap_or(f64::NAN), 48.3200, 0.02),
        check(report.case_label == CaseLabel::Case4, format!("case {}", report.case_label)),
        check(
            report.eet_savings == EetSavingsFlag::AllPreferEet,
            format!("EET vs savings {:?}", report.eet_savings),
        ),
    ])
}

fn c3() -> Outcome {
    let m = cn();
    all(vec![
        near("zeta_hat", critical_age_paygo_savings(&m).unwrap_or(f64::NAN), 37.3233, 0.02),
        near("zeta_tilde", critical_age_paygo_eet(&m).unwrap_or(f64::NAN), 44.6371, 0.02),
    ])
}

fn mixes(m: &Model, pop: (f64, f64), eq: (f64, f64), cap: bool) -> Outcome {
    let p = optimize_mix(m, WeightingMode::Population).unwrap();
    let e = optimize_mix(m, WeightingMode::Equal).unwrap();
    let mut parts = vec![
        near("theta* pop", p.theta_star, pop.0, 5e-3),
        near("k* pop", p.k_star, pop.1, 5e-3),
        near("theta* equal", e.theta_star, eq.0, 5e-3),
        near("k* equal", e.k_star, eq.1, 5e-3),
    ];
    if cap {
        parts.push(check(
            p.cap_binding && (p.theta_star + p.k_star - m.scenario.policy.m).abs() < 1e-9,
            format!("cap binding, theta*+k* = {:.10}", p.theta_star + p.k_star),
        ));
    }
    all(parts)
}

fn c4() -> Outcome {
    mixes(&us(), (0.1169, 0.1331), (0.1029, 0.1471), true)
}

fn c5() -> Outcome {
    mixes(&cn(), (0.1764, 0.0736), (0.1686, 0.0814), false)
}

fn c6() -> Outcome {
    let mut parts = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for (name, m, pop, eq) in [("US", us(), 0.1169, 0.1029), ("CN", cn(), 0.1764, 0.1686)] {
        for (mode, want) in [(WeightingMode::Population, pop), (WeightingMode::Equal, eq)] {
            let v = optimize_voluntary(&m, mode).unwrap();
            parts.push(near(&format!("{name} {mode:?} voluntary theta"), v.theta_star, want, 5e-3));
        }
        // Each cohort picks k*(θ, z) for itself; the welfare of those
        // choices must equal the M2⁺ substitution.
        let welfare = Welfare::new(&m, WelfareOptions::new(WeightingMode::Population)).unwrap();
        let bounds = voluntary_theta_bounds(&m).unwrap();
        let mut worst: f64 = 0.0;
        for _ in 0..20 {
            let theta = rng.random_range(bounds.lower..=bounds.upper);
            let subst = voluntary_objective_with(theta, &welfare, &bounds).unwrap();
            let chosen = welfare
                .objective_with(theta, |z, _| voluntary_k_star(theta, z, &m).unwrap().representative)
                .unwrap();
            worst = worst.max((subst - chosen).abs());
        }
        parts.push(check(worst <= 1e-10, format!("{name} substitution identity max |diff| = {worst:.2e}")));
    }
    all(parts)
}

fn c7() -> Outcome {
    let m = Model::new(Scenario::babyboom_fixture()).unwrap();
    let before = 1.0 / m.support.eval(f64::NEG_INFINITY);
    let after = 1.0 / m.support.eval(f64::INFINITY);
    // Between the two plateaus Λ(t) humps: the boom cohorts are working
    // around t0, with a peak more than twice the no-boom level.
    let (t_lo, t_hi) = m.support.varying_window().unwrap();
    let peak = (0..=2000)
        .map(|i| t_lo + (t_hi - t_lo) * i as f64 / 2000.0)
        .map(|t| (t, m.support.eval(t)))
        .fold((f64::NAN, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
    let plain = Model::new(Scenario::us_baseline()).unwrap().derived.lambda;
    all(vec![
        near("1/Lambda before", before, 0.6738, 2e-3),
        near("1/Lambda after", after, 0.7271, 2e-3),
        check(
            peak.1 > 2.0 * plain && (peak.0 - m.scenario.policy.t0).abs() < 15.0,
            format!("Lambda peak {:.3} at t = {:.1} (no-boom {:.3})", peak.1, peak.0, plain),
        ),
        near("zeta_hat", critical_age_paygo_savings(&m).unwrap_or(f64::NAN), 36.9301, 0.05),
        near("zeta_tilde", critical_age_paygo_eet(&m).unwrap_or(f64::NAN), 46.6149, 0.05),
    ])
}

fn c8() -> Outcome {
    let m = us();
    let t0 = m.scenario.policy.t0;
    let base = SimulationConfig::for_cohort(&m, t0);
    assert_eq!((base.n_paths, base.dt, base.antithetic), (20_000, 0.01, true));
    let rows = verify_value_function(&m, &[t0, t0 - 10.0, t0 - 30.0], &base).unwrap();
    let mut parts: Vec<Outcome> = rows
        .iter()
        .map(|row| {
            let r = &row.report;
            check(
                row.utility_pass && row.terminal_pass,
                format!(
                    "z={}: utility {:.4} vs V {:.4} ({:.2} se), X(T) {:.2e} ({:.2} se)",
                    row.z,
                    r.mean_utility,
                    r.closed_form_value,
                    (r.mean_utility - r.closed_form_value) / r.se_utility,
                    r.mean_terminal_wealth,
                    r.mean_terminal_wealth / r.se_terminal_wealth
                ),
            )
        })
        .collect();
    let scaled = simulate_cohort(&SimulationConfig { pi_scale: 1.5, ..base }, &m).unwrap();
    let gap = (scaled.closed_form_value - scaled.mean_utility) / scaled.se_utility;
    parts.push(check(gap > 3.0, format!("1.5x control below V by {gap:.1} se")));
    all(parts)
}

/// HJB residual at one state, using `V = (L/δ)·G^δ` for spatial
/// derivatives and Richardson-extrapolated differences in time for the
/// coefficients. Controls come from the first-order conditions here.
fn hjb_residual(m: &Model, t: f64, z: f64, x: f64, w: f64, y: f64, theta: f64, k: f64) -> f64 {
    let s = &m.scenario;
    let mk = &s.market;
    let delta = penmix::lifecycle::delta_of(z, m);
    let state = |t: f64| -> [f64; 4] {
        let c = coefficients(t, z, m).unwrap();
        [coeff_l(t, z, delta, m).unwrap(), c.m(theta, k), c.n, 0.0]
    };
    let deriv = |h: f64| -> [f64; 3] {
        let (p, q) = (state(t + h), state(t - h));
        [(p[0] - q[0]) / (2.0 * h), (p[1] - q[1]) / (2.0 * h), (p[2] - q[2]) / (2.0 * h)]
    };
    let (d1, d2) = (deriv(2e-3), deriv(1e-3));
    let dt: Vec<f64> = (0..3).map(|i| (4.0 * d2[i] - d1[i]) / 3.0).collect();
    let [l, mm, n, _] = state(t);
    let g = x + mm * w + n * y;
    let vx = l * g.powf(delta - 1.0);
    let vxx = (delta - 1.0) * l * g.powf(delta - 2.0);
    let (vw, vy) = (mm * vx, n * vx);
    let (vww, vyy, vxw, vxy, vwy) = (mm * mm * vxx, n * n * vxx, mm * vxx, n * vxx, mm * n * vxx);
    let vt = dt[0] / delta * g.powf(delta) + vx * (dt[1] * w + dt[2] * y);

    let retire = z + s.demography.tau - s.demography.a;
    let working = t < retire;
    let b = discount_weight(t, z, m).unwrap();
    let beta_y = if working { mk.beta * y } else { 0.0 };
    let pi = -(vx * (mk.mu - mk.r) + mk.sigma * (vxw * mk.xi * w + vxy * beta_y)) / (mk.sigma * mk.sigma * vxx);
    let c = (vx / b).powf(1.0 / (delta - 1.0));
    let income = if working {
        (1.0 - theta - k) * (1.0 - s.policy.tau1) * w
    } else {
        theta * m.support.eval(t) * w + (1.0 - s.policy.tau2) / m.derived.a_tau * y
    };
    let dy = if working { mk.alpha * y + k * w } else { 0.0 };
    let terms = [
        vt,
        vx * (mk.r * x + pi * (mk.mu - mk.r) + income - c),
        vw * mk.gamma * w,
        vy * dy,
        0.5 * vxx * mk.sigma * mk.sigma * pi * pi,
        0.5 * vww * mk.xi * mk.xi * w * w,
        0.5 * vyy * beta_y * beta_y,
        vxw * mk.sigma * pi * mk.xi * w,
        vxy * mk.sigma * pi * beta_y,
        vwy * mk.xi * w * beta_y,
        b * c.powf(delta) / delta,
    ];
    let scale: f64 = terms.iter().map(|v| v.abs()).sum();
    terms.iter().sum::<f64>().abs() / scale
}

fn c9() -> Outcome {
    let m = us();
    let s = &m.scenario;
    let d = &s.demography;
    let (theta, k) = (s.policy.theta0, s.policy.k0);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut parts = Vec::new();

    let mut jump: f64 = 0.0;
    let mut terminal: f64 = 0.0;
    for z in [-60.0, -35.0, -10.0, 0.0, 15.0] {
        let r = z + d.tau - d.a;
        let (left, right) = (coefficients(r - 1e-12, z, &m).unwrap(), coefficients(r, z, &m).unwrap());
        for (p, q) in [(left.m1, right.m1), (left.m2, right.m2), (left.m3, right.m3), (left.n, right.n)] {
            jump = jump.max((p - q).abs());
        }
        let end = z + d.omega - d.a;
        let c = coefficients(end, z, &m).unwrap();
        terminal = terminal.max(c.m1.abs().max(c.m2.abs()).max(c.m3.abs()).max(c.n.abs()));
        terminal = terminal.max(coeff_l(end, z, s.preference.delta1, &m).unwrap().abs());
    }
    parts.push(check(jump <= 1e-10, format!("retirement jump {jump:.1e}")));
    parts.push(check(terminal <= 1e-12, format!("terminal coefficients {terminal:.1e}")));

    let mut homog: f64 = 0.0;
    let mut hjb: f64 = 0.0;
    for _ in 0..100 {
        let z = rng.random_range(-40.0..10.0);
        let mut t = z + rng.random_range(0.5..(d.omega - d.a - 0.5));
        if (t - (z + d.tau - d.a)).abs() < 0.01 {
            t += 0.02;
        }
        let w = s.market.w0 * (s.market.gamma * t).exp() * rng.random_range(0.5..2.0);
        let y = rng.random_range(0.0..5.0);
        let c = coefficients(t, z, &m).unwrap();
        let floor = -(c.m(theta, k) * w + c.n * y);
        let x = floor + rng.random_range(0.1..10.0);
        let delta = penmix::lifecycle::delta_of(z, &m);
        let v = value_function(t, x, w, y, z, theta, k, &m, delta).unwrap();
        let lam = rng.random_range(0.2..5.0);
        let vl = value_function(t, lam * x, lam * w, lam * y, z, theta, k, &m, delta).unwrap();
        homog = homog.max((vl - lam.powf(delta) * v).abs() / v.abs());
        hjb = hjb.max(hjb_residual(&m, t, z, x, w, y, theta, k));
    }
    parts.push(check(homog <= 1e-12, format!("homogeneity {homog:.1e}")));
    parts.push(check(hjb < 1e-8, format!("HJB residual {hjb:.1e}")));

    let welfare = Welfare::new(&m, WelfareOptions::new(WeightingMode::Population)).unwrap();
    let region = welfare.region();
    let mut worst = f64::INFINITY;
    let mut tested = 0;
    while tested < 50 {
        let p = (rng.random_range(0.0..0.25), rng.random_range(0.0..0.25));
        let q = (rng.random_range(0.0..0.25), rng.random_range(0.0..0.25));
        if !(region.contains(p.0, p.1) && region.contains(q.0, q.1)) {
            continue;
        }
        let f = |a: (f64, f64)| welfare.evaluate(a.0, a.1).unwrap();
        let mid = f(((p.0 + q.0) / 2.0, (p.1 + q.1) / 2.0));
        let chord = (f(p) + f(q)) / 2.0;
        worst = worst.min((mid - chord) / chord.abs());
        tested += 1;
    }
    parts.push(check(worst >= -1e-12, format!("concavity min gap {worst:.1e}")));

    let mut scaled = s.clone();
    scaled.demography.n0 *= 7.0;
    let a = optimize_mix(&m, WeightingMode::Population).unwrap();
    let b = optimize_mix(&Model::new(scaled).unwrap(), WeightingMode::Population).unwrap();
    let moved = (a.theta_star - b.theta_star).abs().max((a.k_star - b.k_star).abs());
    // A smooth maximum pins its argmax only to about sqrt(eps) relative;
    // 1e-6 is far above that floor and far below reporting precision.
    parts.push(check(moved <= 1e-6, format!("n0 x7 argmax shift {moved:.1e}")));
    all(parts)
}

fn c10() -> Outcome {
    all(vec![
        near("US Sharpe gap", us().derived.sharpe_gap, 0.0256, 1e-4),
        near("CN Sharpe gap", cn().derived.sharpe_gap, 0.0333, 1e-4),
    ])
}

// Runs without the libtest harness so the criterion lines always reach the
// console, captured or not.
fn main() {
    let criteria: [(&str, Duration, fn() -> Outcome); 10] = [
        ("US dependency ratio", Duration::from_secs(1), c1),
        ("US critical ages and case", Duration::from_secs(1), c2),
        ("China critical ages", Duration::from_secs(1), c3),
        ("US optimal mixes", Duration::from_secs(120), c4),
        ("China optimal mixes", Duration::from_secs(120), c5),
        ("voluntary equals mandatory", Duration::from_secs(120), c6),
        ("baby-boom variant", Duration::from_secs(60), c7),
        ("Monte Carlo oracle", Duration::from_secs(300), c8),
        ("property suites", Duration::from_secs(60), c9),
        ("Sharpe-gap constants", Duration::from_secs(1), c10),
    ];
    let mut failed = Vec::new();
    for (i, (name, limit, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let in_time = elapsed <= *limit;
        let pass = outcome.pass && in_time;
        println!(
            "criterion {:>2} {}: {} [{:.2}s / {}s] {}",
            i + 1,
            name,
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            limit.as_secs(),
            outcome.detail
        );
        if !pass {
            failed.push(i + 1);
        }
    }
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
