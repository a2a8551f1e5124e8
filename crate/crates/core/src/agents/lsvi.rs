use alloc::vec;
use alloc::vec::Vec;

use crate::env::TaskContext;
use crate::error::Result;
use crate::linalg::{dot, inverse_norm, GramTracker};

use super::{check_transition, Agent, AgentConfig, Algorithm, KnownModel, PlanEvent, Transition};

/// Per-level `(pair, s')` records of every past transition.
pub(crate) type Buffer = Vec<Vec<(usize, usize)>>;

/// Lifelong-LSVI: a fresh least-squares value iteration for the revealed
/// context at the start of every episode.
#[derive(Debug, Clone)]
pub struct LsviAgent {
    model: KnownModel,
    beta: f64,
    trackers: Vec<GramTracker>,
    buffer: Buffer,
    thetas: Vec<Vec<f64>>,
    /// `β‖φ(s,a)‖_{Λ_h⁻¹}` frozen at plan time, `[h][pair]`.
    bonus: Vec<Vec<f64>>,
    planning_calls: usize,
}

impl LsviAgent {
    pub fn new(model: KnownModel, config: &AgentConfig) -> Result<Self> {
        config.validate()?;
        let beta = config.beta(&model);
        let (h, d) = (model.horizon, model.d);
        let trackers = (0..h)
            .map(|_| GramTracker::new(d, config.lambda))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            beta,
            trackers,
            buffer: vec![Vec::new(); h],
            thetas: vec![vec![0.0; d]; h],
            bonus: vec![vec![0.0; model.n_pairs()]; h],
            planning_calls: 0,
            model,
        })
    }

    pub fn trackers(&self) -> &[GramTracker] {
        &self.trackers
    }

    /// `θ̃_h(w)` of the current plan.
    pub fn theta(&self, h: usize) -> &[f64] {
        &self.thetas[h]
    }

    pub fn buffer_len(&self) -> usize {
        self.buffer.iter().map(Vec::len).sum()
    }

    fn plan(&mut self, ctx: &TaskContext) {
        let (ns, na, horizon) = (
            self.model.n_states,
            self.model.n_actions,
            self.model.horizon,
        );
        let cap = horizon as f64;
        for h in (0..horizon).rev() {
            let inverse = self.trackers[h].inverse();
            self.bonus[h] = self
                .model
                .phi
                .iter()
                .map(|f| self.beta * inverse_norm(inverse, f))
                .collect();
            let next: Vec<f64> = if h + 1 == horizon {
                vec![0.0; ns]
            } else {
                (0..ns)
                    .map(|s| {
                        (0..na)
                            .map(|a| self.q_value(h + 1, s, a, ctx))
                            .fold(f64::NEG_INFINITY, f64::max)
                            .min(cap)
                    })
                    .collect()
            };
            self.thetas[h] =
                ridge_with_targets(&self.model, &self.trackers[h], &self.buffer[h], &next);
        }
        self.planning_calls += 1;
    }
}

/// `Λ⁻¹ Σ_τ φ(s_τ,a_τ) V(s'_τ)` over one level's buffer.
pub(crate) fn ridge_with_targets(
    model: &KnownModel,
    tracker: &GramTracker,
    buffer: &[(usize, usize)],
    next_values: &[f64],
) -> Vec<f64> {
    let mut rhs = vec![0.0; model.d];
    for &(pair, s_next) in buffer {
        let y = next_values[s_next];
        for (r, f) in rhs.iter_mut().zip(&model.phi[pair]) {
            *r += f * y;
        }
    }
    tracker.apply_inverse(&rhs)
}

impl Agent for LsviAgent {
    fn algorithm(&self) -> Algorithm {
        Algorithm::Lsvi
    }

    fn horizon(&self) -> usize {
        self.model.horizon
    }

    fn n_actions(&self) -> usize {
        self.model.n_actions
    }

    fn begin_episode(&mut self, ctx: &TaskContext) -> Result<PlanEvent> {
        self.plan(ctx);
        Ok(PlanEvent {
            replanned: true,
            ..PlanEvent::default()
        })
    }

    /// `r + ⟨θ̃_h, φ⟩ + β‖φ‖_{Λ_h⁻¹}`. The plan was fitted for the context
    /// passed to the last `begin_episode`.
    fn q_value(&self, h: usize, s: usize, a: usize, ctx: &TaskContext) -> f64 {
        let p = self.model.pair(s, a);
        self.model.reward(h, s, a, ctx)
            + dot(&self.thetas[h], &self.model.phi[p])
            + self.bonus[h][p]
    }

    fn observe(&mut self, t: &Transition) -> Result<()> {
        check_transition(&self.model, t)?;
        let p = self.model.pair(t.s, t.a);
        self.trackers[t.h].absorb(&self.model.phi[p], t.reward)?;
        self.buffer[t.h].push((p, t.s_next));
        Ok(())
    }

    fn planning_calls(&self) -> usize {
        self.planning_calls
    }

    fn beta(&self) -> f64 {
        self.beta
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{ContextMode, EnvConfig, LinearCmdp};
    use crate::linalg::norm;

    fn setup(h: usize, beta: Option<f64>) -> (LinearCmdp, LsviAgent) {
        let env =
            LinearCmdp::generate(&EnvConfig::new(4, 3, h, 3, 2, ContextMode::VerticesOnly), 5)
                .unwrap();
        let mut cfg = AgentConfig::new(Algorithm::Lsvi, 100);
        cfg.beta_override = beta;
        let agent = LsviAgent::new(KnownModel::from_env(&env, true).unwrap(), &cfg).unwrap();
        (env, agent)
    }

    #[test]
    fn empty_buffer_q_is_reward_plus_bonus() {
        let (env, mut agent) = setup(3, None);
        let ctx = TaskContext::vertex(2, 1);
        agent.begin_episode(&ctx).unwrap();
        for h in 0..3 {
            assert!(agent.theta(h).iter().all(|&v| v == 0.0));
        }
        for s in 0..4 {
            for a in 0..3 {
                let want = env.reward(0, s, a, &ctx) + agent.beta() * norm(env.phi(s, a));
                assert!((agent.q_value(0, s, a, &ctx) - want).abs() < 1e-12);
            }
        }
        assert_eq!(agent.planning_calls(), 1);
    }

    #[test]
    fn bonus_shrinks_after_absorbing_own_feature() {
        let (_env, mut agent) = setup(1, Some(1.0));
        let ctx = TaskContext::vertex(2, 0);
        agent.begin_episode(&ctx).unwrap();
        let before = agent.bonus[0][4];
        let t = Transition {
            h: 0,
            s: 1,
            a: 1,
            s_next: 0,
            reward: 0.0,
            ctx: ctx.clone(),
        };
        agent.observe(&t).unwrap();
        agent.begin_episode(&ctx).unwrap();
        assert!(agent.bonus[0][4] < before);
        // single step: no continuation targets, theta stays zero
        assert!(agent.theta(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn plans_every_episode() {
        let (_env, mut agent) = setup(2, None);
        let ctx = TaskContext::vertex(2, 0);
        for _ in 0..7 {
            assert!(agent.begin_episode(&ctx).unwrap().replanned);
        }
        assert_eq!(agent.planning_calls(), 7);
    }

    #[test]
    fn rejects_bad_transition() {
        let (_env, mut agent) = setup(2, None);
        let ctx = TaskContext::vertex(2, 0);
        let t = Transition {
            h: 2,
            s: 0,
            a: 0,
            s_next: 0,
            reward: 0.0,
            ctx,
        };
        assert!(agent.observe(&t).is_err());
    }
}
