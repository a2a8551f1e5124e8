use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::env::TaskContext;
use crate::error::Result;
use crate::linalg::{dot, inverse_norm, kron, GramTracker, Matrix};

use super::{check_transition, Agent, AgentConfig, Algorithm, KnownModel, PlanEvent, Transition};

/// Least-squares value iteration directly on `ψ(s,a,w)`, sharing one plan
/// across contexts and replanning on the `ψ`-Gram log-det rule.
#[derive(Debug, Clone)]
pub struct PsiLsviAgent {
    model: KnownModel,
    beta: f64,
    trackers: Vec<GramTracker>,
    /// `(pair, s', context)` per level.
    buffer: Vec<Vec<(usize, usize, TaskContext)>>,
    nus: Vec<Vec<f64>>,
    inverses: Vec<Matrix>,
    snapshot: Vec<f64>,
    planned: bool,
    planning_calls: usize,
}

fn context_key(ctx: &TaskContext) -> Vec<u64> {
    ctx.w.iter().map(|v| v.to_bits()).collect()
}

impl PsiLsviAgent {
    pub fn new(model: KnownModel, config: &AgentConfig) -> Result<Self> {
        config.validate()?;
        let beta = config.beta(&model);
        let (h, dp) = (model.horizon, model.d_prime());
        let trackers = (0..h)
            .map(|_| GramTracker::new(dp, config.lambda))
            .collect::<Result<Vec<_>>>()?;
        let inverses = trackers.iter().map(|t| t.inverse().clone()).collect();
        Ok(Self {
            beta,
            trackers,
            buffer: vec![Vec::new(); h],
            nus: vec![vec![0.0; dp]; h],
            inverses,
            snapshot: vec![0.0; h],
            planned: false,
            planning_calls: 0,
            model,
        })
    }

    pub fn trackers(&self) -> &[GramTracker] {
        &self.trackers
    }

    pub fn nu(&self, h: usize) -> &[f64] {
        &self.nus[h]
    }

    pub fn should_replan(&self) -> bool {
        !self.planned
            || self
                .trackers
                .iter()
                .zip(&self.snapshot)
                .any(|(t, &s)| t.logdet_gap(s) > 1.0)
    }

    fn plan(&mut self) {
        let (ns, horizon) = (self.model.n_states, self.model.horizon);
        for h in (0..horizon).rev() {
            self.inverses[h] = self.trackers[h].inverse().clone();
            let mut cache: BTreeMap<Vec<u64>, Vec<f64>> = BTreeMap::new();
            let mut rhs = vec![0.0; self.model.d_prime()];
            for (pair, s_next, ctx) in &self.buffer[h] {
                let y = if h + 1 == horizon {
                    0.0
                } else {
                    let table = cache
                        .entry(context_key(ctx))
                        .or_insert_with(|| (0..ns).map(|s| self.value(h + 1, s, ctx)).collect());
                    table[*s_next]
                };
                if y != 0.0 {
                    let psi = kron(&self.model.phi[*pair], &ctx.w);
                    for (r, p) in rhs.iter_mut().zip(&psi) {
                        *r += p * y;
                    }
                }
            }
            self.nus[h] = self.trackers[h].apply_inverse(&rhs);
        }
        self.snapshot = self.trackers.iter().map(GramTracker::logdet).collect();
        self.planned = true;
        self.planning_calls += 1;
    }
}

impl Agent for PsiLsviAgent {
    fn algorithm(&self) -> Algorithm {
        Algorithm::PsiBaseline
    }

    fn horizon(&self) -> usize {
        self.model.horizon
    }

    fn n_actions(&self) -> usize {
        self.model.n_actions
    }

    fn begin_episode(&mut self, _ctx: &TaskContext) -> Result<PlanEvent> {
        if !self.should_replan() {
            return Ok(PlanEvent::default());
        }
        self.plan();
        Ok(PlanEvent {
            replanned: true,
            ..PlanEvent::default()
        })
    }

    /// `{r + ⟨ν̃_h, ψ⟩ + β‖ψ‖_{Λ̃_h⁻¹}}⁺`
    fn q_value(&self, h: usize, s: usize, a: usize, ctx: &TaskContext) -> f64 {
        let psi = self.model.psi(s, a, ctx);
        let inner = self.model.reward(h, s, a, ctx)
            + dot(&self.nus[h], &psi)
            + self.beta * inverse_norm(&self.inverses[h], &psi);
        inner.max(0.0)
    }

    fn observe(&mut self, t: &Transition) -> Result<()> {
        check_transition(&self.model, t)?;
        let p = self.model.pair(t.s, t.a);
        self.trackers[t.h].absorb(&kron(&self.model.phi[p], &t.ctx.w), t.reward)?;
        self.buffer[t.h].push((p, t.s_next, t.ctx.clone()));
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
    use crate::agents::LsviAgent;
    use crate::env::{ContextMode, EnvConfig, LinearCmdp};
    use crate::linalg::norm;

    #[test]
    fn empty_q_is_reward_plus_psi_bonus() {
        let env =
            LinearCmdp::generate(&EnvConfig::new(4, 2, 2, 3, 2, ContextMode::VerticesOnly), 3)
                .unwrap();
        let cfg = AgentConfig::new(Algorithm::PsiBaseline, 20);
        let mut ag = PsiLsviAgent::new(KnownModel::from_env(&env, true).unwrap(), &cfg).unwrap();
        let ctx = TaskContext::new(9, vec![0.25, 0.75]).unwrap();
        ag.begin_episode(&ctx).unwrap();
        for s in 0..4 {
            let want = env.reward(0, s, 1, &ctx) + ag.beta() * norm(&env.psi(s, 1, &ctx));
            assert!((ag.q_value(0, s, 1, &ctx) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn single_context_matches_lsvi() {
        // m = 1: ψ = φ, so the two agents see identical regressions.
        let env = LinearCmdp::generate(
            &EnvConfig::new(4, 3, 3, 3, 1, ContextMode::VerticesOnly),
            21,
        )
        .unwrap();
        let mut cfg = AgentConfig::new(Algorithm::PsiBaseline, 20);
        cfg.beta_override = Some(0.7);
        let model = KnownModel::from_env(&env, true).unwrap();
        let mut psi = PsiLsviAgent::new(model.clone(), &cfg).unwrap();
        cfg.algorithm = Algorithm::Lsvi;
        let mut lsvi = LsviAgent::new(model, &cfg).unwrap();
        let ctx = TaskContext::vertex(1, 0);
        let mut s = 0;
        for i in 0..40 {
            let h = i % 3;
            let a = (i * 7) % 3;
            let s_next = (i * 5 + 1) % 4;
            let t = Transition {
                h,
                s,
                a,
                s_next,
                reward: env.reward(h, s, a, &ctx),
                ctx: ctx.clone(),
            };
            psi.observe(&t).unwrap();
            lsvi.observe(&t).unwrap();
            s = s_next;
        }
        psi.planned = false;
        psi.begin_episode(&ctx).unwrap();
        lsvi.begin_episode(&ctx).unwrap();
        for h in 0..3 {
            for s in 0..4 {
                for a in 0..3 {
                    let (x, y) = (psi.q_value(h, s, a, &ctx), lsvi.q_value(h, s, a, &ctx));
                    // LSVI has no positive-part clip; Q here is positive
                    assert!(y > 0.0);
                    assert!((x - y).abs() < 1e-10, "h={h} s={s} a={a}: {x} vs {y}");
                }
            }
        }
    }
}
