use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use lifelong_core::{AgentConfig, Algorithm, ContextMode, EnvConfig, SequencerMode};
use serde::{Deserialize, Serialize};

/// One experiment, as read from a JSON document. Everything except the
/// environment shape has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_states: usize,
    pub n_actions: usize,
    pub horizon: usize,
    pub d: usize,
    pub m: usize,
    #[serde(default = "default_context_mode")]
    pub context_mode: ContextMode,
    /// First seed; runs use `seed, seed + 1, …, seed + n_seeds − 1`.
    #[serde(default)]
    pub seed: u64,
    pub n_episodes: usize,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_c_beta")]
    pub c_beta: f64,
    #[serde(default = "default_algorithm")]
    pub algorithm: Algorithm,
    #[serde(default = "default_task_mode")]
    pub task_mode: SequencerMode,
    #[serde(default = "default_n_seeds")]
    pub n_seeds: usize,
    #[serde(default = "default_tol")]
    pub solver_tol: f64,
    #[serde(default = "default_max_iter")]
    pub solver_max_iter: usize,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Fill `wall_micros`; off by default so CSVs are reproducible.
    #[serde(default)]
    pub record_timing: bool,
    /// Axes that `sweep` expands; an empty axis keeps the scalar above.
    #[serde(default)]
    pub sweep: SweepAxes,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxes {
    #[serde(default)]
    pub n_episodes: Vec<usize>,
    #[serde(default)]
    pub algorithms: Vec<Algorithm>,
    #[serde(default)]
    pub task_modes: Vec<SequencerMode>,
}

fn default_context_mode() -> ContextMode {
    ContextMode::VerticesOnly
}
fn default_lambda() -> f64 {
    1.0
}
fn default_delta() -> f64 {
    0.1
}
fn default_c_beta() -> f64 {
    0.1
}
fn default_algorithm() -> Algorithm {
    Algorithm::Ucblvd
}
fn default_task_mode() -> SequencerMode {
    SequencerMode::Iid
}
fn default_n_seeds() -> usize {
    1
}
fn default_tol() -> f64 {
    1e-8
}
fn default_max_iter() -> usize {
    50_000
}

impl ExperimentConfig {
    /// The standard small suite: `d=4, m=2, H=3, S=6, A=3`.
    pub fn standard(algorithm: Algorithm, n_episodes: usize) -> Self {
        Self {
            n_states: 6,
            n_actions: 3,
            horizon: 3,
            d: 4,
            m: 2,
            context_mode: default_context_mode(),
            seed: 0,
            n_episodes,
            lambda: default_lambda(),
            delta: default_delta(),
            c_beta: default_c_beta(),
            algorithm,
            task_mode: default_task_mode(),
            n_seeds: 1,
            solver_tol: default_tol(),
            solver_max_iter: default_max_iter(),
            output: None,
            record_timing: false,
            sweep: SweepAxes::default(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let config: Self = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_episodes == 0 {
            bail!("n_episodes must be at least 1");
        }
        if self.n_seeds == 0 {
            bail!("n_seeds must be at least 1");
        }
        if self.sweep.n_episodes.contains(&0) {
            bail!("sweep.n_episodes entries must be at least 1");
        }
        self.env_config().validate()?;
        self.agent_config().validate()?;
        Ok(())
    }

    pub fn env_config(&self) -> EnvConfig {
        EnvConfig::new(
            self.n_states,
            self.n_actions,
            self.horizon,
            self.d,
            self.m,
            self.context_mode,
        )
    }

    pub fn agent_config(&self) -> AgentConfig {
        AgentConfig {
            lambda: self.lambda,
            delta: self.delta,
            c_beta: self.c_beta,
            solver_tol: self.solver_tol,
            solver_max_iter: self.solver_max_iter,
            ..AgentConfig::new(self.algorithm, self.n_episodes)
        }
    }

    pub fn seeds(&self) -> impl Iterator<Item = u64> {
        let start = self.seed;
        (0..self.n_seeds as u64).map(move |i| start.wrapping_add(i))
    }

    /// Cartesian product of the sweep axes, one config per point.
    pub fn expand(&self) -> Vec<ExperimentConfig> {
        let ks = if self.sweep.n_episodes.is_empty() {
            vec![self.n_episodes]
        } else {
            self.sweep.n_episodes.clone()
        };
        let algs = if self.sweep.algorithms.is_empty() {
            vec![self.algorithm]
        } else {
            self.sweep.algorithms.clone()
        };
        let modes = if self.sweep.task_modes.is_empty() {
            vec![self.task_mode]
        } else {
            self.sweep.task_modes.clone()
        };
        let mut out = Vec::with_capacity(ks.len() * algs.len() * modes.len());
        for &algorithm in &algs {
            for &task_mode in &modes {
                for &n_episodes in &ks {
                    out.push(ExperimentConfig {
                        algorithm,
                        task_mode,
                        n_episodes,
                        sweep: SweepAxes::default(),
                        ..self.clone()
                    });
                }
            }
        }
        out
    }
}
