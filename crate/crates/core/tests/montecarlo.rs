use penmix::montecarlo::{simulate_cohort, SimulationConfig};
use penmix::{Model, Scenario};

/// Salary and EET noise switched off and a negligible equity premium: every
/// path is the deterministic optimum. (The volatility itself must stay
/// positive for the scenario to validate.)
fn quiet() -> Model {
    let mut s = Scenario::us_baseline();
    s.market.xi = 0.0;
    s.market.beta = 0.0;
    s.market.gamma = 0.025;
    s.market.mu = s.market.r + 1e-9;
    Model::new(s).unwrap()
}

fn cfg(m: &Model, z: f64, n_paths: usize, dt: f64) -> SimulationConfig {
    SimulationConfig {
        n_paths,
        dt,
        ..SimulationConfig::for_cohort(m, z)
    }
}

#[test]
fn noiseless_paths_reproduce_the_deterministic_value() {
    let m = quiet();
    let coarse = simulate_cohort(&cfg(&m, -10.0, 4, 0.02), &m).unwrap();
    let fine = simulate_cohort(&cfg(&m, -10.0, 4, 0.01), &m).unwrap();
    for r in [&coarse, &fine] {
        assert!(r.se_utility <= 1e-12 * r.mean_utility.abs(), "se {}", r.se_utility);
        assert!(r.mean_terminal_wealth.abs() < 1e-9);
    }
    let err = |r: &penmix::montecarlo::SimulationReport| (r.mean_utility / r.closed_form_value - 1.0).abs();
    assert!(err(&fine) < 1e-3, "{}", err(&fine));
    // First-order weak convergence.
    let ratio = err(&coarse) / err(&fine);
    assert!(ratio > 1.8 && ratio < 2.2, "ratio {ratio}");
}

#[test]
fn halving_dt_keeps_discrepancies_within_noise() {
    let m = Model::new(Scenario::us_baseline()).unwrap();
    for dt in [0.05, 0.025] {
        let r = simulate_cohort(&cfg(&m, -10.0, 4000, dt), &m).unwrap();
        assert!(r.utility_within(3.0), "dt={dt}: {} vs {} ± {}", r.mean_utility, r.closed_form_value, r.se_utility);
        assert!(r.terminal_within(3.0), "dt={dt}");
        assert!(r.wealth_checks.iter().all(|c| c.within(3.0)));
    }
}

#[test]
fn antithetic_pairs_reduce_the_standard_error() {
    let m = Model::new(Scenario::us_baseline()).unwrap();
    let anti = simulate_cohort(&cfg(&m, -10.0, 4000, 0.05), &m).unwrap();
    let plain = simulate_cohort(
        &SimulationConfig {
            antithetic: false,
            ..cfg(&m, -10.0, 4000, 0.05)
        },
        &m,
    )
    .unwrap();
    assert!(anti.se_utility < plain.se_utility, "{} vs {}", anti.se_utility, plain.se_utility);
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let m = Model::new(Scenario::us_baseline()).unwrap();
    let c = cfg(&m, 0.0, 64, 0.1);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| simulate_cohort(&c, &m).unwrap())
    };
    assert_eq!(run(1), run(3));
}
