use lifelong_core::{Algorithm, SequencerMode};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::experiment::run_experiment;

/// One `(config, seed)` point of a sweep. `error` is set instead of the
/// metrics when that run failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub algorithm: Algorithm,
    pub task_mode: SequencerMode,
    pub n_episodes: usize,
    pub seed: u64,
    pub final_regret: Option<f64>,
    pub total_planning_calls: Option<usize>,
    pub optimism_violations: Option<usize>,
    pub solver_failures: Option<usize>,
    pub error: Option<String>,
}

/// Runs every seed of every config in parallel. Rows come back in input
/// order, configs outermost.
pub fn sweep(configs: &[ExperimentConfig]) -> Vec<SweepRow> {
    let jobs: Vec<(&ExperimentConfig, u64)> = configs
        .iter()
        .flat_map(|c| c.seeds().map(move |s| (c, s)))
        .collect();
    jobs.par_iter()
        .map(|&(config, seed)| {
            let mut row = SweepRow {
                algorithm: config.algorithm,
                task_mode: config.task_mode,
                n_episodes: config.n_episodes,
                seed,
                final_regret: None,
                total_planning_calls: None,
                optimism_violations: None,
                solver_failures: None,
                error: None,
            };
            match run_experiment(config, seed) {
                Ok(m) => {
                    row.final_regret = Some(m.summary.final_regret);
                    row.total_planning_calls = Some(m.summary.total_planning_calls);
                    row.optimism_violations = Some(m.summary.optimism_violations);
                    row.solver_failures = Some(m.summary.solver_failures);
                }
                Err(e) => row.error = Some(format!("{e:#}")),
            }
            row
        })
        .collect()
}
