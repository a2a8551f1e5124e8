use anyhow::Result;
use lifelong_core::verify::PropertyMonitor;
use lifelong_core::{Algorithm, ContextMode};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::experiment::run_observed;

pub const PROBES_PER_CALL: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyReport {
    pub algorithm: Algorithm,
    pub n_seeds: usize,
    pub results: Vec<PropertyResult>,
}

impl PropertyReport {
    pub fn all_passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }

    pub fn get(&self, name: &str) -> Option<&PropertyResult> {
        self.results.iter().find(|r| r.name == name)
    }
}

/// Per-seed outcome of a monitored run.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedCheck {
    pub seed: u64,
    pub planning_calls: usize,
    pub optimism_violations: usize,
    pub solver_failures: usize,
    pub confidence_held: bool,
    pub distill_violations: usize,
    pub probes: usize,
    pub weight_bound_held: bool,
}

/// Planning-call bound of the algorithm for `K` episodes, if it has one.
pub fn planning_bound(config: &ExperimentConfig) -> Option<f64> {
    let (d, h, k, l) = (
        config.d as f64,
        config.horizon as f64,
        config.n_episodes as f64,
        config.lambda,
    );
    let dp = d * config.m as f64;
    match config.algorithm {
        Algorithm::Lsvi => None,
        Algorithm::Ucblvd | Algorithm::ModifiedUcblvd => Some(d * h * (1.0 + k / (d * l)).ln()),
        Algorithm::UnknownRewards => {
            Some(d * h * (1.0 + k / (d * l)).ln() + dp * h * (1.0 + k / (dp * l)).ln())
        }
        Algorithm::PsiBaseline => Some(dp * h * (1.0 + k / (dp * l)).ln()),
    }
}

pub fn check_seeds(config: &ExperimentConfig) -> Result<Vec<SeedCheck>> {
    let seeds: Vec<u64> = config.seeds().collect();
    seeds
        .par_iter()
        .map(|&seed| {
            let mut monitor = PropertyMonitor::new(seed, PROBES_PER_CALL);
            let m = run_observed(config, seed, &mut monitor)?;
            Ok(SeedCheck {
                seed,
                planning_calls: m.summary.total_planning_calls,
                optimism_violations: m.summary.optimism_violations,
                solver_failures: m.summary.solver_failures,
                confidence_held: monitor.confidence_always_held(),
                distill_violations: monitor.distill_violations(),
                probes: monitor.probes_checked(),
                weight_bound_held: monitor.weight_bound_held(),
            })
        })
        .collect()
}

/// Runs the suite over `config.n_seeds` seeds. Distillation-dependent checks
/// need a UCBlvd-family algorithm and vertex contexts; they are left out
/// otherwise.
pub fn verify_properties(config: &ExperimentConfig) -> Result<PropertyReport> {
    config.validate()?;
    let checks = check_seeds(config)?;
    let n = checks.len();
    let delta = config.delta;
    let mut results = Vec::new();

    let optimistic = checks.iter().filter(|c| c.optimism_violations == 0).count();
    let need = ((1.0 - 2.0 * delta) * n as f64).ceil() as usize;
    results.push(PropertyResult {
        name: "optimism",
        passed: optimistic >= need,
        detail: format!("{optimistic}/{n} runs optimistic at every visited step (need {need})"),
    });

    if let Some(bound) = planning_bound(config) {
        let worst = checks.iter().map(|c| c.planning_calls).max().unwrap_or(0);
        results.push(PropertyResult {
            name: "planning_calls",
            passed: worst as f64 <= bound.floor(),
            detail: format!("max {worst} calls, bound {bound:.3}"),
        });
    } else {
        let ok = checks.iter().all(|c| c.planning_calls == config.n_episodes);
        results.push(PropertyResult {
            name: "planning_calls",
            passed: ok,
            detail: format!(
                "every run plans each of {} episodes: {ok}",
                config.n_episodes
            ),
        });
    }

    let failures: usize = checks.iter().map(|c| c.solver_failures).sum();
    results.push(PropertyResult {
        name: "solver_convergence",
        passed: failures == 0,
        detail: format!("{failures} distillation solves hit the iteration cap"),
    });

    let distills = matches!(
        config.algorithm,
        Algorithm::Ucblvd | Algorithm::ModifiedUcblvd | Algorithm::UnknownRewards
    );
    if distills && config.context_mode == ContextMode::VerticesOnly {
        let held = checks.iter().filter(|c| c.confidence_held).count();
        let need = ((1.0 - delta) * n as f64).ceil() as usize;
        results.push(PropertyResult {
            name: "confidence",
            passed: held >= need,
            detail: format!(
                "{held}/{n} runs inside the confidence set at every call (need {need})"
            ),
        });
        let violations: usize = checks.iter().map(|c| c.distill_violations).sum();
        let probes: usize = checks.iter().map(|c| c.probes).sum();
        results.push(PropertyResult {
            name: "distillation_error",
            passed: violations == 0,
            detail: format!("{violations} violations on {probes} probes"),
        });
        let weights = checks.iter().all(|c| c.weight_bound_held);
        results.push(PropertyResult {
            name: "weight_bound",
            passed: weights,
            detail: format!("oracle parameters within H√d: {weights}"),
        });
    }

    Ok(PropertyReport {
        algorithm: config.algorithm,
        n_seeds: n,
        results,
    })
}
