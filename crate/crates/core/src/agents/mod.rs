//! Lifelong-LSVI, UCBlvd and its variants behind one [`Agent`] interface.
//!
//! Every agent owns a [`KnownModel`]: the feature table, the representative
//! contexts and the design set, plus the reward function when rewards are
//! known. The transition kernel is never visible to an agent.

mod lsvi;
mod psi;
mod ucblvd;

use alloc::boxed::Box;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::env::{DesignSet, LinearCmdp, TaskContext};
use crate::error::{invalid, Result};
use crate::linalg::{dot, kron, ln, sqrt};
use crate::qcqp::SolverOptions;

pub use lsvi::LsviAgent;
pub use psi::PsiLsviAgent;
pub use ucblvd::{DistillVariant, LevelPlan, UcbPlan, UcblvdAgent};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Lsvi,
    Ucblvd,
    UnknownRewards,
    ModifiedUcblvd,
    PsiBaseline,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Lsvi,
        Algorithm::Ucblvd,
        Algorithm::UnknownRewards,
        Algorithm::ModifiedUcblvd,
        Algorithm::PsiBaseline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Lsvi => "lsvi",
            Algorithm::Ucblvd => "ucblvd",
            Algorithm::UnknownRewards => "unknown_rewards",
            Algorithm::ModifiedUcblvd => "modified_ucblvd",
            Algorithm::PsiBaseline => "psi_baseline",
        }
    }
}

/// Confidence radius schedules. `t_total = K·H`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaSchedule {
    pub variant: Algorithm,
    pub c_beta: f64,
    pub lambda: f64,
    pub horizon: usize,
    pub d: usize,
    pub m: usize,
    pub t_total: usize,
    pub delta: f64,
}

impl BetaSchedule {
    pub fn d_prime(&self) -> usize {
        self.m * self.d
    }

    pub fn beta(&self) -> f64 {
        let h = self.horizon as f64;
        let d = self.d as f64;
        let dp = self.d_prime() as f64;
        let t = self.t_total as f64;
        let c = self.c_beta;
        match self.variant {
            Algorithm::Lsvi => c * h * (d + sqrt(dp)) * sqrt(ln(d * dp * t / self.delta)),
            Algorithm::Ucblvd => c * h * (d + sqrt(dp)) * sqrt(ln(dp * t / self.delta)),
            Algorithm::UnknownRewards => c * h * dp * sqrt(ln(dp * t / self.delta)),
            Algorithm::ModifiedUcblvd => {
                c * h * (d + sqrt(dp)) * sqrt(self.lambda * ln(d * dp * t / self.delta))
            }
            Algorithm::PsiBaseline => c * dp * h * sqrt(ln(dp * t / self.delta)),
        }
    }

    /// Radius of the reward-estimate ellipsoid, `√(λ m d)`.
    pub fn beta_tilde(&self) -> f64 {
        sqrt(self.lambda * self.d_prime() as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub algorithm: Algorithm,
    pub lambda: f64,
    pub delta: f64,
    pub c_beta: f64,
    /// Number of episodes `K`, used by the confidence radius.
    pub n_episodes: usize,
    #[serde(default = "default_tol")]
    pub solver_tol: f64,
    #[serde(default = "default_max_iter")]
    pub solver_max_iter: usize,
    #[serde(default = "default_true")]
    pub warm_start: bool,
    /// Fixes `β` instead of evaluating the schedule.
    #[serde(default)]
    pub beta_override: Option<f64>,
}

fn default_tol() -> f64 {
    SolverOptions::default().tol
}

fn default_max_iter() -> usize {
    SolverOptions::default().max_iter
}

fn default_true() -> bool {
    true
}

impl AgentConfig {
    pub fn new(algorithm: Algorithm, n_episodes: usize) -> Self {
        Self {
            algorithm,
            lambda: 1.0,
            delta: 0.1,
            c_beta: 0.1,
            n_episodes,
            solver_tol: default_tol(),
            solver_max_iter: default_max_iter(),
            warm_start: true,
            beta_override: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_episodes == 0 {
            return Err(invalid("K must be at least 1"));
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(invalid("lambda must be positive"));
        }
        if !(self.delta > 0.0 && self.delta < 0.5) {
            return Err(invalid("delta must lie in (0, 0.5)"));
        }
        if !(self.c_beta > 0.0) || !self.c_beta.is_finite() {
            return Err(invalid("c_beta must be positive"));
        }
        if !(self.solver_tol > 0.0) || self.solver_max_iter == 0 {
            return Err(invalid(
                "solver tolerance and iteration cap must be positive",
            ));
        }
        if let Some(b) = self.beta_override {
            if !(b >= 0.0) || !b.is_finite() {
                return Err(invalid("beta override must be finite and nonnegative"));
            }
        }
        Ok(())
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.solver_tol,
            max_iter: self.solver_max_iter,
            record_trace: false,
        }
    }

    pub fn schedule(&self, model: &KnownModel) -> BetaSchedule {
        BetaSchedule {
            variant: self.algorithm,
            c_beta: self.c_beta,
            lambda: self.lambda,
            horizon: model.horizon,
            d: model.d,
            m: model.m,
            t_total: self.n_episodes * model.horizon,
            delta: self.delta,
        }
    }

    pub fn beta(&self, model: &KnownModel) -> f64 {
        self.beta_override
            .unwrap_or_else(|| self.schedule(model).beta())
    }
}

/// What an agent is allowed to know about the environment.
#[derive(Debug, Clone, PartialEq)]
pub struct KnownModel {
    pub n_states: usize,
    pub n_actions: usize,
    pub horizon: usize,
    pub d: usize,
    pub m: usize,
    pub phi: Vec<Vec<f64>>,
    /// `None` when rewards have to be learned.
    pub reward_mats: Option<Vec<Vec<Vec<f64>>>>,
    pub representatives: Vec<TaskContext>,
    pub design: DesignSet,
    /// `L`, the bound on `Σ_j |c_j(w)|`.
    pub span_bound: f64,
}

impl KnownModel {
    pub fn from_env(env: &LinearCmdp, rewards_known: bool) -> Result<Self> {
        Ok(Self {
            n_states: env.n_states,
            n_actions: env.n_actions,
            horizon: env.horizon,
            d: env.d,
            m: env.m,
            phi: env.phi.clone(),
            reward_mats: rewards_known.then(|| env.reward_mats.clone()),
            representatives: env.representative_set(),
            design: env.build_design_set()?,
            span_bound: 1.0,
        })
    }

    pub fn n_pairs(&self) -> usize {
        self.n_states * self.n_actions
    }

    pub fn d_prime(&self) -> usize {
        self.m * self.d
    }

    #[inline]
    pub fn pair(&self, s: usize, a: usize) -> usize {
        s * self.n_actions + a
    }

    pub fn phi(&self, s: usize, a: usize) -> &[f64] {
        &self.phi[self.pair(s, a)]
    }

    pub fn psi(&self, s: usize, a: usize, ctx: &TaskContext) -> Vec<f64> {
        kron(self.phi(s, a), &ctx.w)
    }

    /// Known reward; panics if the model was built without rewards.
    pub fn reward(&self, h: usize, s: usize, a: usize, ctx: &TaskContext) -> f64 {
        let mats = self
            .reward_mats
            .as_ref()
            .expect("reward function is not known");
        let f = self.phi(s, a);
        mats[h]
            .iter()
            .zip(&ctx.w)
            .map(|(row, wj)| wj * dot(row, f))
            .sum()
    }
}

/// One observed step.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub h: usize,
    pub s: usize,
    pub a: usize,
    pub s_next: usize,
    pub reward: f64,
    pub ctx: TaskContext,
}

/// Outcome of [`Agent::begin_episode`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlanEvent {
    pub replanned: bool,
    /// Distillation solves that hit the iteration cap.
    pub solver_failures: usize,
    /// Largest distillation objective of the plan (0 for other agents).
    pub max_objective: f64,
}

pub trait Agent: Send {
    fn algorithm(&self) -> Algorithm;

    fn horizon(&self) -> usize;

    fn n_actions(&self) -> usize;

    /// Called when the task of a new episode is revealed; plans if the
    /// algorithm's rule asks for it.
    fn begin_episode(&mut self, ctx: &TaskContext) -> Result<PlanEvent>;

    /// Optimistic action value under the current (frozen) plan.
    fn q_value(&self, h: usize, s: usize, a: usize, ctx: &TaskContext) -> f64;

    /// `min{max_a Q_h(s,a,w), H}`, zero past the horizon.
    fn value(&self, h: usize, s: usize, ctx: &TaskContext) -> f64 {
        if h >= self.horizon() {
            return 0.0;
        }
        let best = (0..self.n_actions())
            .map(|a| self.q_value(h, s, a, ctx))
            .fold(f64::NEG_INFINITY, f64::max);
        best.min(self.horizon() as f64)
    }

    /// Greedy action, lowest index on ties.
    fn act(&self, h: usize, s: usize, ctx: &TaskContext) -> usize {
        argmax_first((0..self.n_actions()).map(|a| self.q_value(h, s, a, ctx)))
    }

    fn observe(&mut self, t: &Transition) -> Result<()>;

    fn planning_calls(&self) -> usize;

    fn beta(&self) -> f64;

    /// The distillation plan, for agents that have one.
    fn ucb_plan(&self) -> Option<&UcbPlan> {
        None
    }

    /// The agent as a UCBlvd-family agent, for agents that are one.
    fn as_ucblvd(&self) -> Option<&UcblvdAgent> {
        None
    }
}

pub(crate) fn argmax_first(values: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, v) in values.enumerate() {
        if v > best_val {
            best_val = v;
            best = i;
        }
    }
    best
}

pub(crate) fn check_transition(model: &KnownModel, t: &Transition) -> Result<()> {
    if t.h >= model.horizon
        || t.s >= model.n_states
        || t.a >= model.n_actions
        || t.s_next >= model.n_states
    {
        return Err(invalid("transition indices out of range"));
    }
    if t.ctx.w.len() != model.m {
        return Err(invalid("context dimension does not match the model"));
    }
    if !t.reward.is_finite() {
        return Err(invalid("non-finite reward"));
    }
    Ok(())
}

pub fn build_agent(env: &LinearCmdp, config: &AgentConfig) -> Result<Box<dyn Agent>> {
    config.validate()?;
    Ok(match config.algorithm {
        Algorithm::Lsvi => Box::new(LsviAgent::new(KnownModel::from_env(env, true)?, config)?),
        Algorithm::Ucblvd => Box::new(UcblvdAgent::new(
            KnownModel::from_env(env, true)?,
            config,
            DistillVariant::Shared,
        )?),
        Algorithm::ModifiedUcblvd => Box::new(UcblvdAgent::new(
            KnownModel::from_env(env, true)?,
            config,
            DistillVariant::PerTask,
        )?),
        Algorithm::UnknownRewards => Box::new(UcblvdAgent::new(
            KnownModel::from_env(env, false)?,
            config,
            DistillVariant::Shared,
        )?),
        Algorithm::PsiBaseline => {
            Box::new(PsiLsviAgent::new(KnownModel::from_env(env, true)?, config)?)
        }
    })
}
