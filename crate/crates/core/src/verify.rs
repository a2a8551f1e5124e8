//! Empirical checks of the confidence, distillation-error, weight-norm and
//! optimism properties against the exact oracle.

use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::agents::{Agent, PlanEvent, UcbPlan, UcblvdAgent};
use crate::env::{LinearCmdp, TaskContext};
use crate::linalg::{dot, kron, norm, sqrt};
use crate::runner::RunObserver;

/// Absolute slack on the distillation-error and weight-norm bounds.
pub const BOUND_SLACK: f64 = 1e-6;

/// Checks of one plan.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlanCheck {
    /// `‖oracle_theta(V_{h+1}(·,w^{(j)})) − θ̃_h(w^{(j)})‖_{Λ_h} ≤ β` for every
    /// level and representative.
    pub confidence_holds: bool,
    /// Largest ratio of that distance to `β`.
    pub confidence_ratio: f64,
    pub probes: usize,
    /// Probes where `|⟨ξ̂_h, ψ⟩ − P_h V_{h+1}| > 2Lβ‖φ‖_{Λ_h⁻¹} + slack`.
    pub distill_violations: usize,
    /// Largest `|⟨ξ̂_h, ψ⟩ − P_h V_{h+1}| − 2Lβ‖φ‖_{Λ_h⁻¹}` over the probes.
    pub distill_margin: f64,
    /// Largest `‖oracle θ‖₂` seen; bounded by `H√d`.
    pub max_oracle_theta_norm: f64,
    pub weight_bound_holds: bool,
}

/// Runs the checks on `plan`, probing `n_probes` random `(h, s, a, e_j)`.
pub fn check_plan<R: Rng + ?Sized>(
    env: &LinearCmdp,
    agent: &UcblvdAgent,
    plan: &UcbPlan,
    n_probes: usize,
    rng: &mut R,
) -> PlanCheck {
    let model = agent.model();
    let beta = agent.beta();
    let reps = &model.representatives;
    let weight_cap = env.horizon as f64 * sqrt(env.d as f64) + BOUND_SLACK;

    let mut check = PlanCheck {
        confidence_holds: true,
        weight_bound_holds: true,
        distill_margin: f64::NEG_INFINITY,
        ..PlanCheck::default()
    };
    // oracle θ per (h, j)
    let mut oracle: Vec<Vec<Vec<f64>>> = Vec::with_capacity(env.horizon);
    for (h, level) in plan.levels.iter().enumerate() {
        let mut per_rep = Vec::with_capacity(reps.len());
        for (j, next) in level.next_values.iter().enumerate() {
            let theta = env.oracle_theta(next, h);
            let diff: Vec<f64> = theta
                .iter()
                .zip(&level.centers[j])
                .map(|(a, b)| a - b)
                .collect();
            let dist = sqrt(level.gram.quad_form(&diff).max(0.0));
            let ratio = if beta > 0.0 {
                dist / beta
            } else {
                f64::INFINITY
            };
            check.confidence_ratio = check.confidence_ratio.max(ratio);
            if dist > beta {
                check.confidence_holds = false;
            }
            let n = norm(&theta);
            check.max_oracle_theta_norm = check.max_oracle_theta_norm.max(n);
            if n > weight_cap {
                check.weight_bound_holds = false;
            }
            per_rep.push(theta);
        }
        oracle.push(per_rep);
    }

    for _ in 0..n_probes {
        let h = rng.random_range(0..env.horizon);
        let s = rng.random_range(0..env.n_states);
        let a = rng.random_range(0..env.n_actions);
        let j = rng.random_range(0..reps.len());
        let level = &plan.levels[h];
        let f = env.phi(s, a);
        let predicted = dot(level.xi(), &kron(f, &reps[j].w));
        let backup = dot(&oracle[h][j], f);
        let bound = level.bonus[model.pair(s, a)];
        let excess = (predicted - backup).abs() - bound;
        check.distill_margin = check.distill_margin.max(excess);
        if excess > BOUND_SLACK {
            check.distill_violations += 1;
        }
        check.probes += 1;
    }
    check
}

/// Accumulated checks over every planning call of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct PropertyMonitor {
    rng: ChaCha8Rng,
    probes_per_call: usize,
    pub checks: Vec<(usize, PlanCheck)>,
}

impl PropertyMonitor {
    pub fn new(seed: u64, probes_per_call: usize) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            probes_per_call,
            checks: Vec::new(),
        }
    }

    /// The confidence event held at every planning call of the run.
    pub fn confidence_always_held(&self) -> bool {
        self.checks.iter().all(|(_, c)| c.confidence_holds)
    }

    /// Distillation-error violations on calls where the confidence event held.
    pub fn distill_violations(&self) -> usize {
        self.checks
            .iter()
            .filter(|(_, c)| c.confidence_holds)
            .map(|(_, c)| c.distill_violations)
            .sum()
    }

    pub fn probes_checked(&self) -> usize {
        self.checks
            .iter()
            .filter(|(_, c)| c.confidence_holds)
            .map(|(_, c)| c.probes)
            .sum()
    }

    pub fn weight_bound_held(&self) -> bool {
        self.checks.iter().all(|(_, c)| c.weight_bound_holds)
    }
}

impl RunObserver for PropertyMonitor {
    fn after_plan(
        &mut self,
        k: usize,
        env: &LinearCmdp,
        agent: &dyn Agent,
        _ctx: &TaskContext,
        event: &PlanEvent,
    ) {
        if !event.replanned {
            return;
        }
        if let (Some(ucb), Some(plan)) = (agent.as_ucblvd(), agent.ucb_plan()) {
            let check = check_plan(env, ucb, plan, self.probes_per_call, &mut self.rng);
            self.checks.push((k, check));
        }
    }
}

/// Design-pair predictions `⟨ξ_h, ψ(s,a,w^{(j)})⟩` of a plan, `[h][j][i]`.
pub fn design_predictions(agent: &UcblvdAgent, plan: &UcbPlan) -> Vec<Vec<Vec<f64>>> {
    let model = agent.model();
    plan.levels
        .iter()
        .map(|level| {
            model
                .representatives
                .iter()
                .map(|ctx| {
                    model
                        .design
                        .pairs
                        .iter()
                        .map(|&(s, a)| dot(level.xi(), &kron(model.phi(s, a), &ctx.w)))
                        .collect()
                })
                .collect()
        })
        .collect()
}
