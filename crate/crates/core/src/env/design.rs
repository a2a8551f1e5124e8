use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm, singular_values, Matrix};

use super::LinearCmdp;

/// Residual norm (relative to the largest candidate) below which a candidate is
/// considered to lie in the span of the already selected vectors.
pub(crate) const RANK_TOL: f64 = 1e-9;

/// Smallest admissible singular value of a design stack.
pub const MIN_SINGULAR_VALUE: f64 = 1e-8;

/// Greedy volume-maximizing selection: repeatedly pick the candidate with the
/// largest residual after projecting out the span of the picks so far.
///
/// Stops after `max_picks` picks or once every residual is negligible, so the
/// returned length is the numerical rank when that is smaller. Ties go to the
/// lowest index.
pub fn greedy_basis(candidates: &[Vec<f64>], max_picks: usize, rel_tol: f64) -> Vec<usize> {
    let scale = candidates.iter().map(|c| norm(c)).fold(0.0, f64::max);
    if scale == 0.0 {
        return Vec::new();
    }
    let mut residuals: Vec<Vec<f64>> = candidates.to_vec();
    let mut picked = Vec::new();
    while picked.len() < max_picks {
        let mut best = None;
        let mut best_norm = rel_tol * scale;
        for (i, r) in residuals.iter().enumerate() {
            if picked.contains(&i) {
                continue;
            }
            let n = norm(r);
            if n > best_norm {
                best_norm = n;
                best = Some(i);
            }
        }
        let Some(i) = best else { break };
        picked.push(i);
        let q: Vec<f64> = residuals[i].iter().map(|v| v / best_norm).collect();
        for r in residuals.iter_mut() {
            // two passes of Gram-Schmidt keep the residuals orthogonal to q
            for _ in 0..2 {
                let c = dot(r, &q);
                axpy(-c, &q, r);
            }
        }
    }
    picked
}

/// `d` state-action pairs with linearly independent features.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSet {
    pub pairs: Vec<(usize, usize)>,
    /// Row `i` is `φ(pairs[i])`.
    pub feature_matrix: Matrix,
}

impl DesignSet {
    pub fn build(env: &LinearCmdp) -> Result<Self> {
        let picks = greedy_basis(&env.phi, env.d, RANK_TOL);
        if picks.len() < env.d {
            return Err(Error::Construction(format!(
                "feature table has rank {} < d = {}",
                picks.len(),
                env.d
            )));
        }
        let pairs: Vec<(usize, usize)> = picks
            .iter()
            .map(|&p| (p / env.n_actions, p % env.n_actions))
            .collect();
        let rows: Vec<Vec<f64>> = picks.iter().map(|&p| env.phi[p].clone()).collect();
        let feature_matrix = Matrix::from_rows(&rows)?;
        let design = Self {
            pairs,
            feature_matrix,
        };
        if design.min_singular_value() < MIN_SINGULAR_VALUE {
            return Err(Error::Construction(
                "design stack is numerically singular".into(),
            ));
        }
        Ok(design)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn min_singular_value(&self) -> f64 {
        singular_values(&self.feature_matrix)[0]
    }

    /// |det| of the stack, i.e. the volume of the parallelotope it spans.
    pub fn volume(&self) -> f64 {
        singular_values(&self.feature_matrix).iter().product()
    }
}
