//! Euler–Maruyama simulation of one cohort under the closed-form feedback
//! controls, used as an independent check of the value function, the
//! terminal condition and the expected-state formulas.
//!
//! One Brownian increment drives salary, the risky asset and the EET fund at
//! every step. Each sample gets its own ChaCha stream keyed by
//! `(seed, sample index)`, so results do not depend on thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lifecycle::{self, CohortCoefficients};
use crate::scenario::Model;

/// Floor applied to the total resource before evaluating controls.
pub const RESOURCE_FLOOR: f64 = 1e-12;

/// Number of interior times at which `E[X]` is checked.
pub const WEALTH_CHECKPOINTS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub n_paths: usize,
    pub dt: f64,
    pub seed: u64,
    pub z: f64,
    pub theta: f64,
    pub k: f64,
    pub antithetic: bool,
    /// Multiplier on the optimal risky holding (1 for the optimum).
    pub pi_scale: f64,
}

impl SimulationConfig {
    /// Defaults for cohort `z` at the scenario's status-quo rates.
    pub fn for_cohort(model: &Model, z: f64) -> Self {
        SimulationConfig {
            n_paths: 20_000,
            dt: 0.01,
            seed: 20_240_601,
            z,
            theta: model.scenario.policy.theta0,
            k: model.scenario.policy.k0,
            antithetic: true,
            pi_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentCheck {
    pub t: f64,
    pub mean: f64,
    pub se: f64,
    pub expected: f64,
}

impl MomentCheck {
    pub fn within(&self, n_se: f64) -> bool {
        (self.mean - self.expected).abs() <= n_se * self.se
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub samples: usize,
    pub mean_utility: f64,
    pub se_utility: f64,
    pub closed_form_value: f64,
    pub mean_terminal_wealth: f64,
    pub se_terminal_wealth: f64,
    /// `E[Y(t0)]` against its closed form, when `t0` is inside the life
    /// window and on the time grid.
    pub y_at_t0: Option<MomentCheck>,
    pub wealth_checks: Vec<MomentCheck>,
    /// Paths on which the resource had to be floored at least once.
    pub clamped_paths: usize,
}

impl SimulationReport {
    pub fn utility_within(&self, n_se: f64) -> bool {
        (self.mean_utility - self.closed_form_value).abs() <= n_se * self.se_utility
    }

    pub fn terminal_within(&self, n_se: f64) -> bool {
        self.mean_terminal_wealth.abs() <= n_se * self.se_terminal_wealth
    }
}

/// Deterministic pairwise summation.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        return v.iter().sum();
    }
    let (a, b) = v.split_at(v.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = pairwise_sum(v) / n;
    let dev: Vec<f64> = v.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&dev) / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Halvings applied to the last cell of the grid; see [`Grid::new`].
pub const TERMINAL_GRADING: usize = 12;

/// Everything on the time grid that does not depend on the path.
struct Grid {
    /// Step lengths; `h.len()` nodes are stepped from, node `h.len()` is T.
    h: Vec<f64>,
    work_steps: usize,
    delta: f64,
    coeffs: Vec<CohortCoefficients>,
    /// `b(t)`, with the pre-retirement left limit at the retirement node.
    b: Vec<f64>,
    b_left_at_retirement: f64,
    i: Vec<f64>,
    /// Resource fraction consumed over each step.
    consumed: Vec<f64>,
    paygo_income: Vec<f64>,
    t0_node: Option<usize>,
    checkpoints: Vec<usize>,
}

fn grid_count(span: f64, dt: f64, what: &str) -> Result<usize> {
    let n = (span / dt).round();
    if n < 1.0 || (n * dt - span).abs() > 1e-9 * span.max(1.0) {
        return Err(Error::Config(format!("dt = {dt} must divide the {what} span {span}")));
    }
    Ok(n as usize)
}

impl Grid {
    /// Uniform `dt` steps, except that the last cell is split geometrically
    /// (dt/2, dt/4, ..., twice dt/2^J). Consumption b^p·G/I is singular like
    /// G/(T−t) there, and a uniform Euler cell leaves an O(dt²) bias in the
    /// terminal wealth that does not average out.
    fn new(cfg: &SimulationConfig, model: &Model) -> Result<Grid> {
        let s = &model.scenario;
        let d = &s.demography;
        let steps = grid_count(d.omega - d.a, cfg.dt, "lifetime")?;
        let work_steps = grid_count(d.tau - d.a, cfg.dt, "working")?;
        if work_steps >= steps {
            return Err(Error::Config("retirement must precede the terminal cell".into()));
        }
        let z = cfg.z;
        let delta = lifecycle::delta_of(z, model);
        let end = z + d.omega - d.a;
        let mut elapsed: Vec<f64> = (0..steps).map(|i| cfg.dt * i as f64).collect();
        elapsed.extend((1..=TERMINAL_GRADING).map(|j| (d.omega - d.a) - cfg.dt / (1u64 << j) as f64));
        elapsed.push(d.omega - d.a);
        let times: Vec<f64> = elapsed.iter().map(|e| z + e).collect();
        let h: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
        debug_assert!((times[times.len() - 1] - end).abs() < 1e-12);
        let coeffs = times
            .iter()
            .map(|&t| lifecycle::coefficients(t, z, model))
            .collect::<Result<Vec<_>>>()?;
        let b: Vec<f64> = elapsed.iter().map(|&e| lifecycle::weight_since_entry(e, s)).collect();
        let b_left_at_retirement = b[work_steps] / s.preference.lambda;
        let i = lifecycle::scale_integral_grid(z, delta, &times, model)?;
        // Consumption per step is set so that the Euler drift of G, a·G,
        // combines with it into the exact law
        // E[G(t+h)] = G(t)·I(t+h)/I(t)·e^{g·h}.
        let nu = model.derived.nu;
        let a = s.market.r + nu * nu / (1.0 - delta);
        let g = lifecycle::resource_growth(delta, model);
        let consumed = h
            .iter()
            .enumerate()
            .map(|(n, &hn)| 1.0 + a * hn - (g * hn).exp() * i[n + 1] / i[n])
            .collect();
        let paygo_income = times
            .iter()
            .enumerate()
            .map(|(n, &t)| {
                if n < work_steps {
                    (1.0 - cfg.theta - cfg.k) * (1.0 - s.policy.tau1)
                } else {
                    cfg.theta * model.support.eval(t)
                }
            })
            .collect();
        let t0 = s.policy.t0;
        let t0_node = {
            let pos = (t0 - z) / cfg.dt;
            let n = pos.round();
            ((pos - n).abs() < 1e-6 && n >= 0.0 && (n as usize) < steps).then_some(n as usize)
        };
        let checkpoints = (1..=WEALTH_CHECKPOINTS)
            .map(|j| ((steps * j) as f64 / (WEALTH_CHECKPOINTS + 1) as f64).round() as usize)
            .collect();
        Ok(Grid {
            h,
            work_steps,
            delta,
            coeffs,
            b,
            b_left_at_retirement,
            i,
            consumed,
            paygo_income,
            t0_node,
            checkpoints,
        })
    }
}

/// Per-sample outputs.
struct Sample {
    utility: f64,
    terminal: f64,
    y_t0: f64,
    x_checks: [f64; WEALTH_CHECKPOINTS],
    clamped: bool,
}

fn run_path(cfg: &SimulationConfig, model: &Model, grid: &Grid, rng: &mut ChaCha8Rng, sign: f64) -> Sample {
    let s = &model.scenario;
    let m = &s.market;
    let (r, sigma, nu) = (m.r, m.sigma, model.derived.nu);
    let delta = grid.delta;
    let eet_payout = (1.0 - s.policy.tau2) / model.derived.a_tau;
    let p = 1.0 / (1.0 - delta);
    let w_rate = m.gamma - 0.5 * m.xi * m.xi;
    let y_rate = m.alpha - 0.5 * m.beta * m.beta;

    let mut x = 0.0;
    let mut w = m.w0 * (m.gamma * cfg.z).exp();
    let mut y = 0.0;
    let mut clamped = false;
    let mut y_t0 = 0.0;
    let mut x_checks = [0.0; WEALTH_CHECKPOINTS];
    let mut utility = 0.0;
    let mut prev_u = 0.0;
    let mut left_h = 0.0;

    let felicity = |b: f64, g: f64, i: f64| {
        let c = b.powf(p) * g / i;
        b * c.powf(delta) / delta
    };

    for (n, &h) in grid.h.iter().enumerate() {
        if Some(n) == grid.t0_node {
            y_t0 = y;
        }
        if let Some(j) = grid.checkpoints.iter().position(|&c| c == n) {
            x_checks[j] = x;
        }
        let c = &grid.coeffs[n];
        let working = n < grid.work_steps;
        let mut g = c.resource(x, w, y, cfg.theta, cfg.k);
        if g < RESOURCE_FLOOR {
            g = RESOURCE_FLOOR;
            clamped = true;
        }
        let u = felicity(grid.b[n], g, grid.i[n]);
        // b jumps by λ at retirement: the cell to the left sees the left limit.
        let u_left = if n == grid.work_steps {
            felicity(grid.b_left_at_retirement, g, grid.i[n])
        } else {
            u
        };
        utility += 0.5 * (left_h * u_left + h * u);
        prev_u = u;
        left_h = h;

        let eet_hedge = if working { m.beta * y * c.n } else { 0.0 };
        let pi = cfg.pi_scale * (nu * g / (sigma * (1.0 - delta)) - (m.xi * w * c.m(cfg.theta, cfg.k) + eet_hedge) / sigma);

        let z_draw: f64 = StandardNormal.sample(rng);
        let db = sign * z_draw * h.sqrt();
        let income = grid.paygo_income[n] * w + if working { 0.0 } else { eet_payout * y };
        x += (r * x + pi * (m.mu - r) + income) * h - grid.consumed[n] * g + sigma * pi * db;
        if working {
            y = y * (y_rate * h + m.beta * db).exp() + cfg.k * w * h;
        }
        w *= (w_rate * h + m.xi * db).exp();
    }
    // I(T) = 0 makes C(T) a 0/0 limit; the last stepped node stands in on a
    // cell of length dt/2^J.
    utility += 0.5 * left_h * prev_u;

    Sample {
        utility,
        terminal: x,
        y_t0,
        x_checks,
        clamped,
    }
}

pub fn simulate_cohort(cfg: &SimulationConfig, model: &Model) -> Result<SimulationReport> {
    if !(cfg.dt > 0.0) {
        return Err(Error::Config(format!("dt must be positive, got {}", cfg.dt)));
    }
    if cfg.n_paths < 2 {
        return Err(Error::Config(format!("need at least 2 paths, got {}", cfg.n_paths)));
    }
    if cfg.antithetic && cfg.n_paths % 2 != 0 {
        return Err(Error::Config("antithetic sampling needs an even path count".into()));
    }
    if !(cfg.theta >= 0.0 && cfg.k >= 0.0 && cfg.theta + cfg.k <= model.scenario.policy.m + 1e-12) {
        return Err(Error::Config(format!("rates ({}, {}) violate the box or the cap", cfg.theta, cfg.k)));
    }
    let s = &model.scenario;
    let grid = Grid::new(cfg, model)?;
    let w_entry = s.market.w0 * (s.market.gamma * cfg.z).exp();
    let closed_form_value = lifecycle::value_function(cfg.z, 0.0, w_entry, 0.0, cfg.z, cfg.theta, cfg.k, model, grid.delta)?;

    let samples = if cfg.antithetic { cfg.n_paths / 2 } else { cfg.n_paths };
    let results: Vec<Sample> = (0..samples)
        .into_par_iter()
        .map(|idx| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(idx as u64);
            if cfg.antithetic {
                let mut twin = rng.clone();
                let a = run_path(cfg, model, &grid, &mut rng, 1.0);
                let b = run_path(cfg, model, &grid, &mut twin, -1.0);
                let mut checks = [0.0; WEALTH_CHECKPOINTS];
                for j in 0..WEALTH_CHECKPOINTS {
                    checks[j] = 0.5 * (a.x_checks[j] + b.x_checks[j]);
                }
                Sample {
                    utility: 0.5 * (a.utility + b.utility),
                    terminal: 0.5 * (a.terminal + b.terminal),
                    y_t0: 0.5 * (a.y_t0 + b.y_t0),
                    x_checks: checks,
                    clamped: a.clamped || b.clamped,
                }
            } else {
                run_path(cfg, model, &grid, &mut rng, 1.0)
            }
        })
        .collect();

    let column = |f: &dyn Fn(&Sample) -> f64| -> Vec<f64> { results.iter().map(f).collect() };
    let (mean_utility, se_utility) = mean_se(&column(&|s| s.utility));
    let (mean_terminal_wealth, se_terminal_wealth) = mean_se(&column(&|s| s.terminal));
    let clamped_paths = results.iter().filter(|s| s.clamped).count();

    let expected = lifecycle::expected_paths_switching(
        cfg.z,
        model,
        (cfg.theta, cfg.k),
        (cfg.theta, cfg.k),
        cfg.z,
        cfg.dt,
    )?;
    let y_at_t0 = grid.t0_node.map(|n| {
        let (mean, se) = mean_se(&column(&|s| s.y_t0));
        MomentCheck {
            t: expected[n].t,
            mean,
            se,
            expected: expected[n].ey,
        }
    });
    let wealth_checks = grid
        .checkpoints
        .iter()
        .enumerate()
        .map(|(j, &n)| {
            let (mean, se) = mean_se(&column(&|s| s.x_checks[j]));
            MomentCheck {
                t: expected[n].t,
                mean,
                se,
                expected: expected[n].ex,
            }
        })
        .collect();

    Ok(SimulationReport {
        samples,
        mean_utility,
        se_utility,
        closed_form_value,
        mean_terminal_wealth,
        se_terminal_wealth,
        y_at_t0,
        wealth_checks,
        clamped_paths,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationRow {
    pub z: f64,
    pub utility_pass: bool,
    pub terminal_pass: bool,
    pub y_pass: bool,
    pub wealth_pass: bool,
    pub pass: bool,
    pub report: SimulationReport,
}

/// Runs [`simulate_cohort`] for each entry time with `base` supplying all
/// other settings; every comparison is at three standard errors.
pub fn verify_value_function(model: &Model, cohorts: &[f64], base: &SimulationConfig) -> Result<Vec<VerificationRow>> {
    cohorts
        .iter()
        .map(|&z| {
            let cfg = SimulationConfig { z, ..base.clone() };
            let report = simulate_cohort(&cfg, model)?;
            let utility_pass = report.utility_within(3.0);
            let terminal_pass = report.terminal_within(3.0);
            let y_pass = report.y_at_t0.is_none_or(|c| c.within(3.0));
            let wealth_pass = report.wealth_checks.iter().all(|c| c.within(3.0));
            Ok(VerificationRow {
                z,
                utility_pass,
                terminal_pass,
                y_pass,
                wealth_pass,
                pass: utility_pass && terminal_pass && y_pass && wealth_pass,
                report,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Scenario;

    #[test]
    fn pairwise_sum_is_exact_on_integers() {
        let v: Vec<f64> = (1..=1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 500_500.0);
    }

    #[test]
    fn config_is_validated() {
        let m = Model::new(Scenario::us_baseline()).unwrap();
        let mut cfg = SimulationConfig::for_cohort(&m, 0.0);
        cfg.dt = 0.3;
        assert!(matches!(simulate_cohort(&cfg, &m), Err(Error::Config(_))));
        cfg.dt = 0.5;
        cfg.n_paths = 3;
        assert!(matches!(simulate_cohort(&cfg, &m), Err(Error::Config(_))));
        cfg.n_paths = 1;
        cfg.antithetic = false;
        assert!(matches!(simulate_cohort(&cfg, &m), Err(Error::Config(_))));
    }

    #[test]
    fn deterministic_given_seed() {
        let m = Model::new(Scenario::us_baseline()).unwrap();
        let mut cfg = SimulationConfig::for_cohort(&m, -10.0);
        cfg.n_paths = 40;
        cfg.dt = 0.1;
        let a = simulate_cohort(&cfg, &m).unwrap();
        let b = simulate_cohort(&cfg, &m).unwrap();
        assert_eq!(a, b);
        cfg.seed += 1;
        assert_ne!(simulate_cohort(&cfg, &m).unwrap().mean_utility, a.mean_utility);
    }
}
