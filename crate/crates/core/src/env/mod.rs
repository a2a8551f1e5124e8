//! Finite linear contextual MDPs.
//!
//! Transitions factor as `P_h(s'|s,a) = Σ_i φ_i(s,a) μ_h^{(i)}(s')` with every
//! `φ(s,a)` on the probability simplex and every `μ_h^{(i)}` a distribution over
//! states, so the kernel is a mixture of `d` distributions. Rewards are
//! `r_h(s,a,w) = ⟨w, A_h φ(s,a)⟩` for a context `w` on the simplex, which is the
//! weighted-reward structure `ψ(s,a,w) = φ(s,a) ⊗ w`.
//!
//! Time steps are 0-based throughout: `h ∈ 0..horizon`.

mod design;
mod oracle;
mod sequencer;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, kron, norm};

pub(crate) use design::RANK_TOL;
pub use design::{greedy_basis, DesignSet};
pub use oracle::OptimalValues;
pub use sequencer::{SequencerMode, TaskSequencer};

/// Tolerance used when checking probability vectors.
pub const PROB_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextMode {
    /// Tasks are restricted to the simplex vertices (the representative set).
    VerticesOnly,
    /// Tasks may be arbitrary simplex points.
    SimplexInterior,
}

fn default_concentration() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub n_states: usize,
    pub n_actions: usize,
    pub horizon: usize,
    pub d: usize,
    pub m: usize,
    pub context_mode: ContextMode,
    /// Fraction of reward-matrix entries forced to zero.
    #[serde(default)]
    pub reward_sparsity: f64,
    /// Dirichlet concentration of the feature vectors.
    #[serde(default = "default_concentration")]
    pub feature_concentration: f64,
    /// Dirichlet concentration of the component next-state distributions.
    #[serde(default = "default_concentration")]
    pub transition_concentration: f64,
}

impl EnvConfig {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        horizon: usize,
        d: usize,
        m: usize,
        context_mode: ContextMode,
    ) -> Self {
        Self {
            n_states,
            n_actions,
            horizon,
            d,
            m,
            context_mode,
            reward_sparsity: 0.0,
            feature_concentration: 1.0,
            transition_concentration: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_states == 0 || self.n_actions == 0 || self.horizon == 0 {
            return Err(invalid("n_states, n_actions and horizon must be positive"));
        }
        if self.d == 0 || self.m == 0 {
            return Err(invalid("feature and context dimensions must be positive"));
        }
        if self.d > self.n_states * self.n_actions {
            return Err(invalid(format!(
                "feature dimension {} exceeds the {} state-action pairs",
                self.d,
                self.n_states * self.n_actions
            )));
        }
        if !(0.0..1.0).contains(&self.reward_sparsity) {
            return Err(invalid("reward_sparsity must lie in [0, 1)"));
        }
        if !(self.feature_concentration > 0.0) || !(self.transition_concentration > 0.0) {
            return Err(invalid("Dirichlet concentrations must be positive"));
        }
        Ok(())
    }
}

/// A task context: a point on the `m`-simplex. `ρ(w) = w`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskContext {
    pub id: usize,
    pub w: Vec<f64>,
}

impl TaskContext {
    pub fn new(id: usize, w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(invalid("empty context"));
        }
        if w.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(invalid("context weights must be finite and nonnegative"));
        }
        let total: f64 = w.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(invalid("context weights must sum to one"));
        }
        Ok(Self { id, w })
    }

    /// The `j`-th simplex vertex `e_j`, carrying id `j`.
    pub fn vertex(m: usize, j: usize) -> Self {
        let mut w = vec![0.0; m];
        w[j] = 1.0;
        Self { id: j, w }
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    /// `Some(j)` when the context is exactly the vertex `e_j`.
    pub fn vertex_index(&self) -> Option<usize> {
        let j = self.w.iter().position(|&v| v == 1.0)?;
        self.w
            .iter()
            .enumerate()
            .all(|(i, &v)| i == j || v == 0.0)
            .then_some(j)
    }

    /// Span coefficients over the vertex representatives; `Σ|c_j| = 1`.
    pub fn span_coefficients(&self) -> &[f64] {
        &self.w
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearCmdp {
    pub n_states: usize,
    pub n_actions: usize,
    pub horizon: usize,
    pub d: usize,
    pub m: usize,
    pub context_mode: ContextMode,
    pub seed: u64,
    /// Row `s * n_actions + a` holds `φ(s, a)`.
    pub phi: Vec<Vec<f64>>,
    /// `mu[h][i]` is the distribution `μ_h^{(i)}` over next states.
    pub mu: Vec<Vec<Vec<f64>>>,
    /// `reward_mats[h]` is the `m × d` matrix `A_h`.
    pub reward_mats: Vec<Vec<Vec<f64>>>,
}

fn dirichlet(rng: &mut ChaCha8Rng, alpha: f64, len: usize) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("positive concentration");
    loop {
        let draws: Vec<f64> = (0..len).map(|_| gamma.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        if total > 0.0 && total.is_finite() {
            let mut out: Vec<f64> = draws.iter().map(|g| g / total).collect();
            // pin the sum to exactly one up to rounding of the last entry
            let head: f64 = out[..len - 1].iter().sum();
            out[len - 1] = (1.0 - head).max(0.0);
            return out;
        }
    }
}

impl LinearCmdp {
    /// Draws an environment satisfying the linear-MDP, boundedness and
    /// reward-range contracts by construction. Deterministic in `seed`.
    pub fn generate(config: &EnvConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pairs = config.n_states * config.n_actions;
        let phi = {
            let mut attempt = 0;
            loop {
                let phi: Vec<Vec<f64>> = (0..pairs)
                    .map(|_| dirichlet(&mut rng, config.feature_concentration, config.d))
                    .collect();
                if greedy_basis(&phi, config.d, design::RANK_TOL).len() == config.d {
                    break phi;
                }
                attempt += 1;
                if attempt >= 100 {
                    return Err(Error::Construction(format!(
                        "could not draw a rank-{} feature table",
                        config.d
                    )));
                }
            }
        };
        let mu = (0..config.horizon)
            .map(|_| {
                (0..config.d)
                    .map(|_| dirichlet(&mut rng, config.transition_concentration, config.n_states))
                    .collect()
            })
            .collect();
        let mut reward_mats: Vec<Vec<Vec<f64>>> = (0..config.horizon)
            .map(|_| {
                (0..config.m)
                    .map(|_| {
                        (0..config.d)
                            .map(|_| {
                                let v: f64 = rng.random();
                                let keep = rng.random::<f64>() >= config.reward_sparsity;
                                if keep {
                                    v
                                } else {
                                    0.0
                                }
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let mut peak = 0.0f64;
        for a_h in &reward_mats {
            for row in a_h {
                for f in &phi {
                    peak = peak.max(dot(row, f));
                }
            }
        }
        if peak > 0.0 {
            // the margin keeps rounding from pushing the peak reward past one
            let scale = peak * (1.0 + 1e-12);
            for a_h in &mut reward_mats {
                for row in a_h.iter_mut() {
                    row.iter_mut().for_each(|v| *v /= scale);
                }
            }
        }
        let env = Self {
            n_states: config.n_states,
            n_actions: config.n_actions,
            horizon: config.horizon,
            d: config.d,
            m: config.m,
            context_mode: config.context_mode,
            seed,
            phi,
            mu,
            reward_mats,
        };
        env.validate()?;
        Ok(env)
    }

    pub fn config(&self) -> EnvConfig {
        EnvConfig::new(
            self.n_states,
            self.n_actions,
            self.horizon,
            self.d,
            self.m,
            self.context_mode,
        )
    }

    /// Checks shapes and the linear-MDP, norm-bound and reward-range invariants.
    pub fn validate(&self) -> Result<()> {
        let pairs = self.n_states * self.n_actions;
        let bad = |msg: &str| Err(Error::Construction(msg.into()));
        if self.phi.len() != pairs || self.phi.iter().any(|f| f.len() != self.d) {
            return bad("feature table has the wrong shape");
        }
        if self.mu.len() != self.horizon
            || self
                .mu
                .iter()
                .any(|m| m.len() != self.d || m.iter().any(|r| r.len() != self.n_states))
        {
            return bad("transition measures have the wrong shape");
        }
        if self.reward_mats.len() != self.horizon
            || self
                .reward_mats
                .iter()
                .any(|a| a.len() != self.m || a.iter().any(|r| r.len() != self.d))
        {
            return bad("reward matrices have the wrong shape");
        }
        for f in &self.phi {
            if f.iter().any(|&v| !(v >= 0.0)) || (f.iter().sum::<f64>() - 1.0).abs() > PROB_TOL {
                return bad("features must lie on the simplex");
            }
        }
        for mu_h in &self.mu {
            for row in mu_h {
                if row.iter().any(|&v| !(v >= 0.0))
                    || (row.iter().sum::<f64>() - 1.0).abs() > PROB_TOL
                {
                    return bad("transition components must be distributions");
                }
            }
        }
        for a_h in &self.reward_mats {
            for row in a_h {
                for f in &self.phi {
                    let r = dot(row, f);
                    if !(-1e-12..=1.0 + 1e-12).contains(&r) {
                        return bad("vertex rewards must lie in [0, 1]");
                    }
                }
            }
        }
        Ok(())
    }

    pub fn n_pairs(&self) -> usize {
        self.n_states * self.n_actions
    }

    /// Dimension of the context feature `ψ`, `m · d`.
    pub fn d_prime(&self) -> usize {
        self.m * self.d
    }

    #[inline]
    pub fn pair_index(&self, s: usize, a: usize) -> usize {
        s * self.n_actions + a
    }

    #[inline]
    pub fn phi(&self, s: usize, a: usize) -> &[f64] {
        &self.phi[self.pair_index(s, a)]
    }

    /// `ψ(s,a,w) = φ(s,a) ⊗ w`.
    pub fn psi(&self, s: usize, a: usize, ctx: &TaskContext) -> Vec<f64> {
        kron(self.phi(s, a), &ctx.w)
    }

    fn check_step(&self, h: usize, s: usize, a: usize) -> Result<()> {
        if h >= self.horizon {
            return Err(Error::IndexOutOfRange {
                what: "h",
                index: h,
                limit: self.horizon,
            });
        }
        if s >= self.n_states {
            return Err(Error::IndexOutOfRange {
                what: "s",
                index: s,
                limit: self.n_states,
            });
        }
        if a >= self.n_actions {
            return Err(Error::IndexOutOfRange {
                what: "a",
                index: a,
                limit: self.n_actions,
            });
        }
        Ok(())
    }

    /// `P_h(·|s,a) = ⟨μ_h(·), φ(s,a)⟩`.
    pub fn transition_probs(&self, h: usize, s: usize, a: usize) -> Result<Vec<f64>> {
        self.check_step(h, s, a)?;
        let mut p = vec![0.0; self.n_states];
        for (fi, row) in self.phi(s, a).iter().zip(&self.mu[h]) {
            for (pj, mj) in p.iter_mut().zip(row) {
                *pj += fi * mj;
            }
        }
        Ok(p)
    }

    /// Samples the next state by inverse-CDF on one uniform draw.
    pub fn sample_step<R: Rng + ?Sized>(
        &self,
        h: usize,
        s: usize,
        a: usize,
        rng: &mut R,
    ) -> Result<usize> {
        let p = self.transition_probs(h, s, a)?;
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last = 0;
        for (j, &pj) in p.iter().enumerate() {
            if pj > 0.0 {
                last = j;
            }
            acc += pj;
            if u < acc {
                return Ok(j);
            }
        }
        Ok(last)
    }

    /// `r_h(s,a,w) = ⟨w, A_h φ(s,a)⟩`.
    pub fn reward(&self, h: usize, s: usize, a: usize, ctx: &TaskContext) -> f64 {
        let f = self.phi(s, a);
        self.reward_mats[h]
            .iter()
            .zip(&ctx.w)
            .map(|(row, wj)| wj * dot(row, f))
            .sum()
    }

    /// The vertex representatives `e_1 … e_m`; coefficients `c_j(w) = w_j`, `L = 1`.
    pub fn representative_set(&self) -> Vec<TaskContext> {
        (0..self.m)
            .map(|j| TaskContext::vertex(self.m, j))
            .collect()
    }

    pub fn build_design_set(&self) -> Result<DesignSet> {
        DesignSet::build(self)
    }

    /// Largest `‖φ(s,a)‖₂` over the table.
    pub fn max_feature_norm(&self) -> f64 {
        self.phi.iter().map(|f| norm(f)).fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> EnvConfig {
        EnvConfig::new(5, 3, 2, 4, 2, ContextMode::VerticesOnly)
    }

    #[test]
    fn generated_env_is_valid_and_deterministic() {
        for seed in 0..10 {
            let a = LinearCmdp::generate(&small(), seed).unwrap();
            a.validate().unwrap();
            let b = LinearCmdp::generate(&small(), seed).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn infeasible_config_is_rejected() {
        let cfg = EnvConfig::new(2, 2, 1, 5, 1, ContextMode::VerticesOnly);
        assert!(matches!(
            LinearCmdp::generate(&cfg, 0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn transition_rows_sum_to_one() {
        let env = LinearCmdp::generate(&small(), 3).unwrap();
        for h in 0..env.horizon {
            for s in 0..5 {
                for a in 0..3 {
                    let p = env.transition_probs(h, s, a).unwrap();
                    assert!(p.iter().all(|&v| v >= 0.0));
                    assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-10);
                }
            }
        }
        assert!(env.transition_probs(2, 0, 0).is_err());
        assert!(env.transition_probs(0, 5, 0).is_err());
        assert!(env.transition_probs(0, 0, 3).is_err());
    }

    #[test]
    fn vertex_feature_returns_component_row() {
        let mut env = LinearCmdp::generate(&small(), 1).unwrap();
        env.phi[0] = vec![0.0, 0.0, 1.0, 0.0];
        assert_eq!(env.transition_probs(1, 0, 0).unwrap(), env.mu[1][2]);

        env.phi[1] = vec![0.25; 4];
        let p = env.transition_probs(0, 0, 1).unwrap();
        for (s, &ps) in p.iter().enumerate() {
            let avg = env.mu[0].iter().map(|r| r[s]).sum::<f64>() / 4.0;
            assert!((ps - avg).abs() < 1e-15);
        }
    }

    #[test]
    fn degenerate_transition_always_samples_target() {
        let mut env = LinearCmdp::generate(&small(), 2).unwrap();
        env.mu[0][0] = vec![0.0, 0.0, 0.0, 1.0, 0.0];
        env.phi[0] = vec![1.0, 0.0, 0.0, 0.0];
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..1000 {
            assert_eq!(env.sample_step(0, 0, 0, &mut rng).unwrap(), 3);
        }
    }

    #[test]
    fn sampling_is_reproducible() {
        let env = LinearCmdp::generate(&small(), 4).unwrap();
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut s = 0;
            let mut path = Vec::new();
            for h in 0..env.horizon {
                s = env.sample_step(h, s, 1, &mut rng).unwrap();
                path.push(s);
            }
            path
        };
        assert_eq!(run(11), run(11));
    }

    #[test]
    fn reward_is_linear_in_context() {
        let env = LinearCmdp::generate(&small(), 5).unwrap();
        let ctx = TaskContext::new(9, vec![0.3, 0.7]).unwrap();
        for h in 0..env.horizon {
            for s in 0..env.n_states {
                for a in 0..env.n_actions {
                    let r = env.reward(h, s, a, &ctx);
                    let e0 = env.reward(h, s, a, &TaskContext::vertex(2, 0));
                    let e1 = env.reward(h, s, a, &TaskContext::vertex(2, 1));
                    assert_eq!(e0, dot(&env.reward_mats[h][0], env.phi(s, a)));
                    assert!((r - (0.3 * e0 + 0.7 * e1)).abs() < 1e-12);
                    assert!((0.0..=1.0).contains(&r));
                }
            }
        }
    }

    #[test]
    fn representative_set_is_vertices() {
        let mut cfg = small();
        cfg.m = 3;
        let env = LinearCmdp::generate(&cfg, 0).unwrap();
        let reps = env.representative_set();
        let ws: Vec<_> = reps.iter().map(|c| c.w.clone()).collect();
        assert_eq!(
            ws,
            vec![
                vec![1.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0]
            ]
        );
        let ctx = TaskContext::new(3, vec![0.2, 0.5, 0.3]).unwrap();
        let c = ctx.span_coefficients();
        let mut rebuilt = vec![0.0; 3];
        for (j, rep) in reps.iter().enumerate() {
            crate::linalg::axpy(c[j], &rep.w, &mut rebuilt);
        }
        assert_eq!(rebuilt, ctx.w);
        assert!((c.iter().map(|v| v.abs()).sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn task_context_validation() {
        assert!(TaskContext::new(0, vec![0.5, 0.6]).is_err());
        assert!(TaskContext::new(0, vec![-0.1, 1.1]).is_err());
        assert!(TaskContext::new(0, vec![]).is_err());
        assert_eq!(TaskContext::vertex(3, 1).vertex_index(), Some(1));
        assert_eq!(
            TaskContext::new(0, vec![0.5, 0.5]).unwrap().vertex_index(),
            None
        );
    }
}
