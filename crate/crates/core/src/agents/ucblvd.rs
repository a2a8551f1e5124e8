use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::env::{greedy_basis, TaskContext};
use crate::error::{Error, Result};
use crate::linalg::{dot, inverse_norm, kron, sqrt, GramTracker, Matrix};
use crate::qcqp::{
    solve_distillation_from, DistillationProblem, DistillationSolution, SolverOptions, TaskBlock,
};

use super::lsvi::{ridge_with_targets, Buffer};
use super::{check_transition, Agent, AgentConfig, Algorithm, KnownModel, PlanEvent, Transition};

/// Which residual pairs the distillation program runs over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistillVariant {
    /// One design set of `d` pairs shared by every representative.
    Shared,
    /// A design set per representative, selected over the stacked features
    /// `[φ; ψ(·,·,w^{(j)})]`.
    PerTask,
}

/// Frozen parameters of one level of a plan.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelPlan {
    pub solution: DistillationSolution,
    /// Reward estimate `η̃_h` when rewards are learned.
    pub eta: Option<Vec<f64>>,
    /// Ridge estimates `θ̃_h(w^{(j)})`, one per representative.
    pub centers: Vec<Vec<f64>>,
    /// `V_{h+1}(·, w^{(j)})` used as regression targets, one table per representative.
    pub next_values: Vec<Vec<f64>>,
    pub gram: Matrix,
    pub gram_inverse: Matrix,
    pub psi_gram_inverse: Option<Matrix>,
    /// `2Lβ‖φ(s,a)‖_{Λ_h⁻¹}` per pair.
    pub bonus: Vec<f64>,
}

impl LevelPlan {
    pub fn xi(&self) -> &[f64] {
        &self.solution.xi
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UcbPlan {
    pub levels: Vec<LevelPlan>,
    /// Episode (1-based) at which the plan was computed.
    pub episode: usize,
}

/// UCBlvd and its relatives: plans are recomputed only when the
/// log-determinant of some level's Gram matrix has grown by more than one
/// since the last plan.
#[derive(Debug, Clone)]
pub struct UcblvdAgent {
    model: KnownModel,
    variant: DistillVariant,
    beta: f64,
    beta_tilde: f64,
    solver: SolverOptions,
    warm_start: bool,
    trackers: Vec<GramTracker>,
    psi_trackers: Option<Vec<GramTracker>>,
    buffer: Buffer,
    snapshot: Vec<f64>,
    psi_snapshot: Vec<f64>,
    task_designs: Vec<Vec<usize>>,
    plan: Option<UcbPlan>,
    planning_calls: usize,
    episode: usize,
}

impl UcblvdAgent {
    pub fn new(model: KnownModel, config: &AgentConfig, variant: DistillVariant) -> Result<Self> {
        config.validate()?;
        let beta = config.beta(&model);
        let beta_tilde = config.schedule(&model).beta_tilde();
        let h = model.horizon;
        let trackers = (0..h)
            .map(|_| GramTracker::new(model.d, config.lambda))
            .collect::<Result<Vec<_>>>()?;
        let psi_trackers = if model.reward_mats.is_none() {
            Some(
                (0..h)
                    .map(|_| GramTracker::new(model.d_prime(), config.lambda))
                    .collect::<Result<Vec<_>>>()?,
            )
        } else {
            None
        };
        let task_designs = match variant {
            DistillVariant::Shared => Vec::new(),
            DistillVariant::PerTask => per_task_designs(&model)?,
        };
        Ok(Self {
            variant,
            beta,
            beta_tilde,
            solver: config.solver_options(),
            warm_start: config.warm_start,
            trackers,
            psi_trackers,
            buffer: vec![Vec::new(); h],
            snapshot: vec![0.0; h],
            psi_snapshot: vec![0.0; h],
            task_designs,
            plan: None,
            planning_calls: 0,
            episode: 0,
            model,
        })
    }

    pub fn model(&self) -> &KnownModel {
        &self.model
    }

    pub fn variant(&self) -> DistillVariant {
        self.variant
    }

    pub fn trackers(&self) -> &[GramTracker] {
        &self.trackers
    }

    pub fn psi_trackers(&self) -> Option<&[GramTracker]> {
        self.psi_trackers.as_deref()
    }

    pub fn plan(&self) -> Option<&UcbPlan> {
        self.plan.as_ref()
    }

    pub fn beta_tilde(&self) -> f64 {
        self.beta_tilde
    }

    /// Pair indices of the design set used for representative `j`.
    pub fn design_pairs(&self, j: usize) -> Vec<usize> {
        match self.variant {
            DistillVariant::Shared => self
                .model
                .design
                .pairs
                .iter()
                .map(|&(s, a)| self.model.pair(s, a))
                .collect(),
            DistillVariant::PerTask => self.task_designs[j].clone(),
        }
    }

    pub fn xi_radius(&self) -> f64 {
        self.model.horizon as f64 * sqrt(self.model.d_prime() as f64)
    }

    /// The replanning rule: some level's log-det grew by more than one.
    pub fn should_replan(&self) -> bool {
        if self.plan.is_none() {
            return true;
        }
        let phi_gap = self
            .trackers
            .iter()
            .zip(&self.snapshot)
            .any(|(t, &s)| t.logdet_gap(s) > 1.0);
        let psi_gap = self.psi_trackers.as_ref().is_some_and(|ts| {
            ts.iter()
                .zip(&self.psi_snapshot)
                .any(|(t, &s)| t.logdet_gap(s) > 1.0)
        });
        phi_gap || psi_gap
    }

    /// Runs a full backward pass on the current data without touching the
    /// agent's plan. Used by `begin_episode` and for side-by-side comparisons.
    pub fn compute_plan(&self, variant: DistillVariant, warm: Option<&UcbPlan>) -> Result<UcbPlan> {
        match variant {
            DistillVariant::Shared => self.plan_inner(None, warm),
            DistillVariant::PerTask if !self.task_designs.is_empty() => {
                self.plan_inner(Some(&self.task_designs), warm)
            }
            DistillVariant::PerTask => self.plan_inner(Some(&per_task_designs(&self.model)?), warm),
        }
    }

    /// Per-task planning with caller-chosen design pairs (flat pair indices),
    /// one list per representative. Each list must span the feature space.
    pub fn compute_plan_with_designs(
        &self,
        designs: &[Vec<usize>],
        warm: Option<&UcbPlan>,
    ) -> Result<UcbPlan> {
        let m = &self.model;
        if designs.len() != m.representatives.len() {
            return Err(Error::InvalidArgument(format!(
                "{} design lists for {} representatives",
                designs.len(),
                m.representatives.len()
            )));
        }
        for pairs in designs {
            if pairs.iter().any(|&p| p >= m.phi.len()) {
                return Err(Error::InvalidArgument(
                    "design pair index out of range".into(),
                ));
            }
            let rows: Vec<Vec<f64>> = pairs.iter().map(|&p| m.phi[p].clone()).collect();
            let rank = greedy_basis(&rows, m.d, crate::env::RANK_TOL).len();
            if rank < m.d {
                return Err(Error::InvalidArgument(format!(
                    "design has rank {rank} < d = {}",
                    m.d
                )));
            }
        }
        self.plan_inner(Some(designs), warm)
    }

    fn plan_inner(
        &self,
        designs: Option<&[Vec<usize>]>,
        warm: Option<&UcbPlan>,
    ) -> Result<UcbPlan> {
        let horizon = self.model.horizon;
        let ns = self.model.n_states;
        let reps = &self.model.representatives;
        let mut reversed: Vec<LevelPlan> = Vec::with_capacity(horizon);
        for h in (0..horizon).rev() {
            let tracker = &self.trackers[h];
            let next_values: Vec<Vec<f64>> = reps
                .iter()
                .map(|ctx| match reversed.last() {
                    None => vec![0.0; ns],
                    Some(level) => (0..ns)
                        .map(|s| self.level_value(level, h + 1, s, ctx))
                        .collect(),
                })
                .collect();
            let centers: Vec<Vec<f64>> = next_values
                .iter()
                .map(|v| ridge_with_targets(&self.model, tracker, &self.buffer[h], v))
                .collect();
            let chol = tracker.cholesky()?;
            let problem = match designs {
                None => DistillationProblem::kronecker(
                    &self.model.design,
                    reps,
                    centers.clone(),
                    chol,
                    self.beta.max(f64::MIN_POSITIVE),
                    self.xi_radius(),
                )?,
                Some(designs) => {
                    let blocks = reps
                        .iter()
                        .zip(designs)
                        .zip(&centers)
                        .map(|((ctx, pairs), center)| TaskBlock {
                            phi_rows: pairs.iter().map(|&p| self.model.phi[p].clone()).collect(),
                            psi_rows: pairs
                                .iter()
                                .map(|&p| kron(&self.model.phi[p], &ctx.w))
                                .collect(),
                            center: center.clone(),
                        })
                        .collect();
                    DistillationProblem::new(
                        blocks,
                        chol,
                        self.beta.max(f64::MIN_POSITIVE),
                        self.xi_radius(),
                    )?
                }
            };
            let warm_level = warm
                .filter(|_| self.warm_start)
                .map(|p| &p.levels[h].solution);
            let solution = solve_distillation_from(&problem, &self.solver, warm_level);
            let scale = 2.0 * self.model.span_bound * self.beta;
            let inverse = tracker.inverse().clone();
            let bonus = self
                .model
                .phi
                .iter()
                .map(|f| scale * inverse_norm(&inverse, f))
                .collect();
            let (eta, psi_gram_inverse) = match &self.psi_trackers {
                Some(ts) => (
                    Some(ts[h].ridge_solve().weights),
                    Some(ts[h].inverse().clone()),
                ),
                None => (None, None),
            };
            reversed.push(LevelPlan {
                solution,
                eta,
                centers,
                next_values,
                gram: tracker.matrix().clone(),
                gram_inverse: inverse,
                psi_gram_inverse,
                bonus,
            });
        }
        reversed.reverse();
        Ok(UcbPlan {
            levels: reversed,
            episode: self.episode,
        })
    }

    /// `Q_h(s,a,w)` under a given level plan.
    pub fn level_q(
        &self,
        level: &LevelPlan,
        h: usize,
        s: usize,
        a: usize,
        ctx: &TaskContext,
    ) -> f64 {
        let p = self.model.pair(s, a);
        let psi = kron(&self.model.phi[p], &ctx.w);
        let inner = match (&level.eta, &level.psi_gram_inverse) {
            (Some(eta), Some(psi_inv)) => {
                dot(eta, &psi)
                    + dot(level.xi(), &psi)
                    + level.bonus[p]
                    + self.beta_tilde * inverse_norm(psi_inv, &psi)
            }
            _ => self.model.reward(h, s, a, ctx) + dot(level.xi(), &psi) + level.bonus[p],
        };
        inner.max(0.0)
    }

    /// `min{max_a Q_h(s,a,w), H}` under a given level plan.
    pub fn level_value(&self, level: &LevelPlan, h: usize, s: usize, ctx: &TaskContext) -> f64 {
        (0..self.model.n_actions)
            .map(|a| self.level_q(level, h, s, a, ctx))
            .fold(f64::NEG_INFINITY, f64::max)
            .min(self.model.horizon as f64)
    }
}

/// Greedy design sets over `[φ; φ ⊗ w^{(j)}]` per representative.
fn per_task_designs(model: &KnownModel) -> Result<Vec<Vec<usize>>> {
    model
        .representatives
        .iter()
        .map(|ctx| {
            let stacked: Vec<Vec<f64>> = model
                .phi
                .iter()
                .map(|f| {
                    let mut v = f.clone();
                    v.extend(kron(f, &ctx.w));
                    v
                })
                .collect();
            let picks = greedy_basis(&stacked, model.d + model.d_prime(), crate::env::RANK_TOL);
            if picks.len() < model.d {
                return Err(Error::Construction(format!(
                    "per-task design for context {} has rank {} < d = {}",
                    ctx.id,
                    picks.len(),
                    model.d
                )));
            }
            Ok(picks)
        })
        .collect()
}

impl Agent for UcblvdAgent {
    fn algorithm(&self) -> Algorithm {
        match (self.variant, self.psi_trackers.is_some()) {
            (_, true) => Algorithm::UnknownRewards,
            (DistillVariant::PerTask, false) => Algorithm::ModifiedUcblvd,
            (DistillVariant::Shared, false) => Algorithm::Ucblvd,
        }
    }

    fn horizon(&self) -> usize {
        self.model.horizon
    }

    fn n_actions(&self) -> usize {
        self.model.n_actions
    }

    fn begin_episode(&mut self, _ctx: &TaskContext) -> Result<PlanEvent> {
        self.episode += 1;
        if !self.should_replan() {
            return Ok(PlanEvent::default());
        }
        let plan = self.compute_plan(self.variant, self.plan.as_ref())?;
        let event = PlanEvent {
            replanned: true,
            solver_failures: plan.levels.iter().filter(|l| !l.solution.converged).count(),
            max_objective: plan
                .levels
                .iter()
                .map(|l| l.solution.objective)
                .fold(0.0, f64::max),
        };
        self.plan = Some(plan);
        self.snapshot = self.trackers.iter().map(GramTracker::logdet).collect();
        if let Some(ts) = &self.psi_trackers {
            self.psi_snapshot = ts.iter().map(GramTracker::logdet).collect();
        }
        self.planning_calls += 1;
        Ok(event)
    }

    fn q_value(&self, h: usize, s: usize, a: usize, ctx: &TaskContext) -> f64 {
        match &self.plan {
            Some(plan) => self.level_q(&plan.levels[h], h, s, a, ctx),
            None => 0.0,
        }
    }

    fn observe(&mut self, t: &Transition) -> Result<()> {
        check_transition(&self.model, t)?;
        let p = self.model.pair(t.s, t.a);
        self.trackers[t.h].absorb(&self.model.phi[p], t.reward)?;
        if let Some(ts) = &mut self.psi_trackers {
            ts[t.h].absorb(&kron(&self.model.phi[p], &t.ctx.w), t.reward)?;
        }
        self.buffer[t.h].push((p, t.s_next));
        Ok(())
    }

    fn planning_calls(&self) -> usize {
        self.planning_calls
    }

    fn beta(&self) -> f64 {
        self.beta
    }

    fn ucb_plan(&self) -> Option<&UcbPlan> {
        self.plan.as_ref()
    }

    fn as_ucblvd(&self) -> Option<&UcblvdAgent> {
        Some(self)
    }
}
