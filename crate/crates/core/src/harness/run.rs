//! Monte Carlo runs and hyperparameter grid search.

use std::time::{Duration, Instant};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::run_baseline;
use crate::error::{Error, Result};
use crate::fedlt::run_fedlt;
use crate::harness::config::ExperimentConfig;
use crate::metrics::MetricsTrace;
use crate::problem::{solve_reference, ProblemInstance, REFERENCE_TOL};
use crate::vector::ModelVector;

const PARTICIPATION_SALT: u64 = 0x5bd1_e995_3c6e_f372;

/// Per-run seeds derived from the master seed.
pub fn derive_seeds(master: u64, count: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    (0..count).map(|_| rng.next_u64()).collect()
}

/// A generated problem together with its reference optimum.
#[derive(Debug, Clone)]
pub struct Instance {
    pub seed: u64,
    pub problem: ProblemInstance,
    pub x_bar: ModelVector,
}

/// Generates and solves the problem of every Monte Carlo run of `cfg`.
pub fn prepare_instances(cfg: &ExperimentConfig) -> Result<Vec<Instance>> {
    cfg.validate()?;
    derive_seeds(cfg.seed, cfg.monte_carlo)
        .into_par_iter()
        .map(|seed| {
            let problem = cfg.problem.generate(seed)?;
            let x_bar = solve_reference(&problem, REFERENCE_TOL)?;
            Ok(Instance { seed, problem, x_bar })
        })
        .collect()
}

/// One run of `cfg` on a prepared instance.
pub fn run_instance(cfg: &ExperimentConfig, inst: &Instance) -> Result<MetricsTrace> {
    let mut participation = cfg
        .participation
        .build(inst.problem.num_agents(), inst.seed ^ PARTICIPATION_SALT)?;
    match cfg.baseline() {
        None => run_fedlt(&inst.problem, &inst.x_bar, &cfg.fedlt(), &mut participation, cfg.rounds, inst.seed),
        Some(b) => run_baseline(&inst.problem, &inst.x_bar, &b, &mut participation, cfg.rounds, inst.seed),
    }
}

/// Runs every instance concurrently. Results are in instance order.
pub fn run_on_instances(cfg: &ExperimentConfig, instances: &[Instance]) -> Result<Vec<(MetricsTrace, Duration)>> {
    cfg.validate()?;
    instances
        .par_iter()
        .map(|inst| {
            let t0 = Instant::now();
            let trace = run_instance(cfg, inst)?;
            Ok((trace, t0.elapsed()))
        })
        .collect()
}

/// Monte Carlo runs with wall-clock time per run, sorted by seed.
pub fn run_experiment_timed(cfg: &ExperimentConfig) -> Result<Vec<(MetricsTrace, Duration)>> {
    let instances = prepare_instances(cfg)?;
    let mut out = run_on_instances(cfg, &instances)?;
    out.sort_by_key(|(t, _)| t.seed);
    Ok(out)
}

/// `monte_carlo` independent runs with seeds derived from `cfg.seed`,
/// sorted by seed.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<MetricsTrace>> {
    Ok(run_experiment_timed(cfg)?.into_iter().map(|(t, _)| t).collect())
}

/// Mean asymptotic error over runs; `+∞` when any run diverged.
pub fn mean_asymptotic_error(traces: &[MetricsTrace]) -> f64 {
    if traces.is_empty() {
        return f64::INFINITY;
    }
    let m = traces.iter().map(|t| t.asymptotic_error()).sum::<f64>() / traces.len() as f64;
    if m.is_finite() {
        m
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub gamma: f64,
    /// Second axis; see `AlgorithmConfig::set_secondary`.
    pub rho: f64,
    pub mean_asymptotic_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub best: GridCell,
    /// Row-major over `gamma_grid × rho_grid`.
    pub table: Vec<GridCell>,
}

/// Exhaustive search minimizing the mean asymptotic error. Divergent or
/// failing cells score `+∞`; ties go to the smaller `γ`, then smaller `ρ`.
pub fn grid_search(cfg: &ExperimentConfig, gamma_grid: &[f64], rho_grid: &[f64]) -> Result<GridResult> {
    if gamma_grid.is_empty() || rho_grid.is_empty() {
        return Err(Error::Empty("grid"));
    }
    let instances = prepare_instances(cfg)?;
    let cells: Vec<(f64, f64)> = gamma_grid
        .iter()
        .flat_map(|&g| rho_grid.iter().map(move |&r| (g, r)))
        .collect();
    let table: Vec<GridCell> = cells
        .par_iter()
        .map(|&(gamma, rho)| {
            let mut c = cfg.clone();
            c.algorithm.gamma = gamma;
            c.algorithm.set_secondary(rho);
            let score = match run_on_instances(&c, &instances) {
                Ok(runs) => {
                    let traces: Vec<MetricsTrace> = runs.into_iter().map(|(t, _)| t).collect();
                    mean_asymptotic_error(&traces)
                }
                Err(_) => f64::INFINITY,
            };
            GridCell {
                gamma,
                rho,
                mean_asymptotic_error: score,
            }
        })
        .collect();

    let best = *table
        .iter()
        .min_by(|a, b| {
            a.mean_asymptotic_error
                .total_cmp(&b.mean_asymptotic_error)
                .then(a.gamma.total_cmp(&b.gamma))
                .then(a.rho.total_cmp(&b.rho))
        })
        .expect("non-empty grid");
    Ok(GridResult { best, table })
}
