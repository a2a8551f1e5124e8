use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

use super::{ContextMode, TaskContext};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequencerMode {
    Iid,
    RoundRobin,
    /// Vertex with the largest realized cumulative regret, started from the
    /// least-visited state.
    AdversarialRegret,
}

/// Chooses the task context and initial state of each episode.
#[derive(Debug, Clone)]
pub struct TaskSequencer {
    mode: SequencerMode,
    context_mode: ContextMode,
    m: usize,
    n_states: usize,
    rng: ChaCha8Rng,
    regret_by_vertex: Vec<f64>,
    state_visits: Vec<u64>,
}

impl TaskSequencer {
    pub fn new(
        mode: SequencerMode,
        context_mode: ContextMode,
        m: usize,
        n_states: usize,
        seed: u64,
    ) -> Self {
        Self {
            mode,
            context_mode,
            m,
            n_states,
            rng: ChaCha8Rng::seed_from_u64(seed),
            regret_by_vertex: vec![0.0; m],
            state_visits: vec![0; n_states],
        }
    }

    pub fn mode(&self) -> SequencerMode {
        self.mode
    }

    /// Task for episode `k` (1-based).
    pub fn next_task(&mut self, k: usize) -> Result<(usize, TaskContext)> {
        if k == 0 {
            return Err(invalid("episodes are numbered from 1"));
        }
        Ok(match self.mode {
            SequencerMode::Iid => {
                let s = self.rng.random_range(0..self.n_states);
                let ctx = match self.context_mode {
                    ContextMode::VerticesOnly => {
                        TaskContext::vertex(self.m, self.rng.random_range(0..self.m))
                    }
                    ContextMode::SimplexInterior => self.interior_context(k),
                };
                (s, ctx)
            }
            SequencerMode::RoundRobin => {
                let s = self.rng.random_range(0..self.n_states);
                (s, TaskContext::vertex(self.m, (k - 1) % self.m))
            }
            SequencerMode::AdversarialRegret => {
                let j = argmax_first(&self.regret_by_vertex);
                let s = argmin_first(&self.state_visits);
                (s, TaskContext::vertex(self.m, j))
            }
        })
    }

    fn interior_context(&mut self, k: usize) -> TaskContext {
        // uniform Dirichlet through normalized exponential draws
        let draws: Vec<f64> = (0..self.m).map(|_| Exp1.sample(&mut self.rng)).collect();
        let total: f64 = draws.iter().sum();
        let mut w: Vec<f64> = draws.iter().map(|e| e / total).collect();
        let head: f64 = w[..self.m - 1].iter().sum();
        w[self.m - 1] = (1.0 - head).max(0.0);
        TaskContext {
            id: self.m + k - 1,
            w,
        }
    }

    /// Feeds back what happened in an episode: the realized regret and every
    /// state the trajectory visited.
    pub fn record_episode(&mut self, ctx: &TaskContext, regret: f64, visited: &[usize]) {
        if let Some(j) = ctx.vertex_index() {
            self.regret_by_vertex[j] += regret;
        }
        for &s in visited {
            self.state_visits[s] += 1;
        }
    }

    pub fn regret_by_vertex(&self) -> &[f64] {
        &self.regret_by_vertex
    }

    pub fn state_visits(&self) -> &[u64] {
        &self.state_visits
    }
}

fn argmax_first(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

fn argmin_first(xs: &[u64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x < xs[best] {
            best = i;
        }
    }
    best
}
