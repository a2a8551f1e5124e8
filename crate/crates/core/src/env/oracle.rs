//! Exact dynamic programming on a known environment.

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::dot;

use super::{LinearCmdp, TaskContext};

/// `Q*` and `V*` tables for one context. `v` has `horizon + 1` levels with the
/// terminal level fixed at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalValues {
    n_states: usize,
    n_actions: usize,
    q: Vec<f64>,
    v: Vec<f64>,
}

impl OptimalValues {
    pub fn q(&self, h: usize, s: usize, a: usize) -> f64 {
        self.q[(h * self.n_states + s) * self.n_actions + a]
    }

    pub fn v(&self, h: usize, s: usize) -> f64 {
        self.v[h * self.n_states + s]
    }

    pub fn v_level(&self, h: usize) -> &[f64] {
        &self.v[h * self.n_states..(h + 1) * self.n_states]
    }

    /// Greedy optimal action table, `[h * n_states + s]`, lowest index on ties.
    pub fn greedy_policy(&self) -> Vec<usize> {
        let levels = self.v.len() / self.n_states - 1;
        let mut out = Vec::with_capacity(levels * self.n_states);
        for h in 0..levels {
            for s in 0..self.n_states {
                let mut best = 0;
                for a in 1..self.n_actions {
                    if self.q(h, s, a) > self.q(h, s, best) {
                        best = a;
                    }
                }
                out.push(best);
            }
        }
        out
    }
}

impl LinearCmdp {
    /// `θ_i = Σ_{s'} μ_h^{(i)}(s') V(s')`, so that `P_h[V](s,a) = ⟨θ, φ(s,a)⟩`.
    pub fn oracle_theta(&self, values: &[f64], h: usize) -> Vec<f64> {
        assert_eq!(values.len(), self.n_states, "value table length");
        self.mu[h].iter().map(|row| dot(row, values)).collect()
    }

    /// `P_h[V](s,a)` for every pair, indexed like the feature table.
    pub fn backup(&self, h: usize, values: &[f64]) -> Vec<f64> {
        let theta = self.oracle_theta(values, h);
        self.phi.iter().map(|f| dot(f, &theta)).collect()
    }

    /// Rewards of every pair at step `h`, indexed like the feature table.
    pub fn reward_table(&self, h: usize, ctx: &TaskContext) -> Vec<f64> {
        (0..self.n_states)
            .flat_map(|s| (0..self.n_actions).map(move |a| (s, a)))
            .map(|(s, a)| self.reward(h, s, a, ctx))
            .collect()
    }

    /// Backward induction of the optimal Bellman equations.
    pub fn optimal_values(&self, ctx: &TaskContext) -> OptimalValues {
        let (ns, na) = (self.n_states, self.n_actions);
        let mut q = vec![0.0; self.horizon * ns * na];
        let mut v = vec![0.0; (self.horizon + 1) * ns];
        for h in (0..self.horizon).rev() {
            let next = v[(h + 1) * ns..(h + 2) * ns].to_vec();
            let cont = self.backup(h, &next);
            let rewards = self.reward_table(h, ctx);
            for s in 0..ns {
                let mut best = f64::NEG_INFINITY;
                for a in 0..na {
                    let p = s * na + a;
                    let val = rewards[p] + cont[p];
                    q[(h * ns + s) * na + a] = val;
                    best = best.max(val);
                }
                v[h * ns + s] = best;
            }
        }
        OptimalValues {
            n_states: ns,
            n_actions: na,
            q,
            v,
        }
    }

    /// Exact `V^π` for a deterministic policy table `[h * n_states + s]`;
    /// returns all `horizon + 1` levels.
    pub fn policy_values(&self, ctx: &TaskContext, policy: &[usize]) -> Vec<f64> {
        let ns = self.n_states;
        assert_eq!(policy.len(), self.horizon * ns, "policy table length");
        let mut v = vec![0.0; (self.horizon + 1) * ns];
        for h in (0..self.horizon).rev() {
            let next = v[(h + 1) * ns..(h + 2) * ns].to_vec();
            let theta = self.oracle_theta(&next, h);
            for s in 0..ns {
                let a = policy[h * ns + s];
                v[h * ns + s] = self.reward(h, s, a, ctx) + dot(self.phi(s, a), &theta);
            }
        }
        v
    }

    /// `V_1^π(s_1, w)`.
    pub fn evaluate_policy(&self, ctx: &TaskContext, policy: &[usize], s1: usize) -> f64 {
        self.policy_values(ctx, policy)[s1]
    }
}
