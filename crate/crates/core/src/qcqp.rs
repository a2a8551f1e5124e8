//! Value distillation as a convex QCQP.
//!
//! Minimizes `Σ_j Σ_{(s,a)} (⟨θ_j, φ(s,a)⟩ − ⟨ξ, ψ_j(s,a)⟩)²` subject to
//! `‖θ_j − θ̃_j‖_Λ ≤ β` for every task and `‖ξ‖₂ ≤ R`.
//!
//! With `Λ = L Lᵀ` the substitution `u_j = Lᵀ(θ_j − θ̃_j)` turns each ellipsoid
//! into the Euclidean ball `‖u_j‖ ≤ β`, so the feasible set becomes a product
//! of balls and the projection is exact. The solver runs projected gradient
//! descent in `(ξ, u_1, …, u_n)` with the fixed step `1 / Lip`, where `Lip`
//! is twice the top eigenvalue of the quadratic form (power iteration).

use alloc::vec;
use alloc::vec::Vec;

use crate::env::{DesignSet, TaskContext};
use crate::error::{invalid, Result};
use crate::linalg::{axpy, dot, kron, norm, sqrt, Cholesky};

/// Residual rows of one task.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskBlock {
    pub phi_rows: Vec<Vec<f64>>,
    pub psi_rows: Vec<Vec<f64>>,
    /// The ridge estimate `θ̃_j` the ellipsoid is centred on.
    pub center: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct DistillationProblem {
    pub blocks: Vec<TaskBlock>,
    pub gram_chol: Cholesky,
    pub beta: f64,
    pub xi_radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Bound on the fixed-point residual `‖z − P(z − ∇f(z)/Lip)‖`.
    pub tol: f64,
    pub max_iter: usize,
    /// Keep the objective of every iterate in [`DistillationSolution::trace`].
    pub record_trace: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 50_000,
            record_trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistillationSolution {
    pub xi: Vec<f64>,
    pub thetas: Vec<Vec<f64>>,
    pub objective: f64,
    /// Final fixed-point residual of the projected-gradient map.
    pub kkt_residual: f64,
    pub iterations: usize,
    /// `false` when `max_iter` ran out before the residual reached `tol`.
    pub converged: bool,
    pub trace: Vec<f64>,
}

impl DistillationProblem {
    pub fn new(
        blocks: Vec<TaskBlock>,
        gram_chol: Cholesky,
        beta: f64,
        xi_radius: f64,
    ) -> Result<Self> {
        if !(beta > 0.0) || !(xi_radius > 0.0) {
            return Err(invalid("beta and xi_radius must be positive"));
        }
        let d = gram_chol.dim();
        let d_prime = blocks
            .iter()
            .flat_map(|b| b.psi_rows.first())
            .map(Vec::len)
            .next()
            .unwrap_or(0);
        for b in &blocks {
            if b.center.len() != d
                || b.phi_rows.len() != b.psi_rows.len()
                || b.phi_rows.iter().any(|r| r.len() != d)
                || b.psi_rows.iter().any(|r| r.len() != d_prime)
            {
                return Err(invalid("inconsistent distillation block shapes"));
            }
        }
        Ok(Self {
            blocks,
            gram_chol,
            beta,
            xi_radius,
        })
    }

    /// Problem over one shared design set with `ψ_j(s,a) = φ(s,a) ⊗ ρ(w_j)`.
    pub fn kronecker(
        design: &DesignSet,
        contexts: &[TaskContext],
        centers: Vec<Vec<f64>>,
        gram_chol: Cholesky,
        beta: f64,
        xi_radius: f64,
    ) -> Result<Self> {
        if contexts.len() != centers.len() {
            return Err(invalid("one center per representative context"));
        }
        let phi_rows: Vec<Vec<f64>> = (0..design.len())
            .map(|i| design.feature_matrix.row(i).to_vec())
            .collect();
        let blocks = contexts
            .iter()
            .zip(centers)
            .map(|(ctx, center)| TaskBlock {
                psi_rows: phi_rows.iter().map(|f| kron(f, &ctx.w)).collect(),
                phi_rows: phi_rows.clone(),
                center,
            })
            .collect();
        Self::new(blocks, gram_chol, beta, xi_radius)
    }

    pub fn d(&self) -> usize {
        self.gram_chol.dim()
    }

    pub fn d_prime(&self) -> usize {
        self.blocks
            .iter()
            .flat_map(|b| b.psi_rows.first())
            .map(Vec::len)
            .next()
            .unwrap_or(0)
    }

    pub fn objective(&self, xi: &[f64], thetas: &[Vec<f64>]) -> f64 {
        self.blocks
            .iter()
            .zip(thetas)
            .map(|(b, theta)| {
                b.phi_rows
                    .iter()
                    .zip(&b.psi_rows)
                    .map(|(f, p)| {
                        let r = dot(theta, f) - dot(xi, p);
                        r * r
                    })
                    .sum::<f64>()
            })
            .sum()
    }

    /// `‖θ − center‖_Λ` computed as `‖Lᵀ(θ − center)‖`.
    pub fn ellipsoid_distance(&self, theta: &[f64], center: &[f64]) -> f64 {
        let diff: Vec<f64> = theta.iter().zip(center).map(|(a, b)| a - b).collect();
        norm(&self.gram_chol.mul_upper(&diff))
    }

    pub fn is_feasible(&self, xi: &[f64], thetas: &[Vec<f64>], rel_slack: f64) -> bool {
        norm(xi) <= self.xi_radius * (1.0 + rel_slack)
            && self.blocks.iter().zip(thetas).all(|(b, t)| {
                self.ellipsoid_distance(t, &b.center) <= self.beta * (1.0 + rel_slack)
            })
    }
}

/// Euclidean projection onto `{‖x‖ ≤ radius}`.
pub fn project_ball(x: &[f64], radius: f64) -> Vec<f64> {
    let n = norm(x);
    if n <= radius {
        x.to_vec()
    } else {
        x.iter().map(|v| v * (radius / n)).collect()
    }
}

/// Projection onto `{‖θ − center‖_Λ ≤ beta}` in the whitened coordinates
/// `u = Lᵀ(θ − center)`.
pub fn project_ellipsoid(
    theta: &[f64],
    center: &[f64],
    gram_chol: &Cholesky,
    beta: f64,
) -> Vec<f64> {
    let diff: Vec<f64> = theta.iter().zip(center).map(|(a, b)| a - b).collect();
    let u = gram_chol.mul_upper(&diff);
    let n = norm(&u);
    if n <= beta {
        return theta.to_vec();
    }
    let scaled: Vec<f64> = u.iter().map(|v| v * (beta / n)).collect();
    let mut out = gram_chol.solve_upper(&scaled);
    axpy(1.0, center, &mut out);
    out
}

/// (offset ⟨θ̃, φ⟩, L⁻¹φ, ψ)
type WhitenedRow = (f64, Vec<f64>, Vec<f64>);

/// Precomputed rows in solver coordinates.
struct Whitened {
    d: usize,
    d_prime: usize,
    rows: Vec<Vec<WhitenedRow>>,
}

impl Whitened {
    fn new(problem: &DistillationProblem) -> Self {
        let rows = problem
            .blocks
            .iter()
            .map(|b| {
                b.phi_rows
                    .iter()
                    .zip(&b.psi_rows)
                    .map(|(f, p)| {
                        (
                            dot(&b.center, f),
                            problem.gram_chol.solve_lower(f),
                            p.clone(),
                        )
                    })
                    .collect()
            })
            .collect();
        Self {
            d: problem.d(),
            d_prime: problem.d_prime(),
            rows,
        }
    }

    fn n_vars(&self) -> usize {
        self.d_prime + self.rows.len() * self.d
    }

    fn u_block<'a>(&self, z: &'a [f64], j: usize) -> &'a [f64] {
        let start = self.d_prime + j * self.d;
        &z[start..start + self.d]
    }

    /// `M z` without the constant offsets.
    fn apply(&self, z: &[f64], out: &mut Vec<f64>) {
        out.clear();
        let xi = &z[..self.d_prime];
        for (j, block) in self.rows.iter().enumerate() {
            let u = self.u_block(z, j);
            for (_, g, p) in block {
                out.push(dot(u, g) - dot(xi, p));
            }
        }
    }

    /// `Mᵀ r`
    fn apply_t(&self, r: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut idx = 0;
        for (j, block) in self.rows.iter().enumerate() {
            for (_, g, p) in block {
                let ri = r[idx];
                idx += 1;
                let (xi_part, rest) = out.split_at_mut(self.d_prime);
                axpy(-ri, p, xi_part);
                let start = j * self.d;
                axpy(ri, g, &mut rest[start..start + self.d]);
            }
        }
    }

    fn residuals(&self, z: &[f64], out: &mut Vec<f64>) {
        self.apply(z, out);
        let mut idx = 0;
        for block in &self.rows {
            for (offset, _, _) in block {
                out[idx] += offset;
                idx += 1;
            }
        }
    }

    /// Top eigenvalue of `MᵀM` by power iteration.
    fn top_eigenvalue(&self) -> f64 {
        let n = self.n_vars();
        if n == 0 {
            return 0.0;
        }
        let mut v: Vec<f64> = (0..n)
            .map(|i| 1.0 + 0.1 * ((i * 7919) % 13) as f64)
            .collect();
        let nv = norm(&v);
        v.iter_mut().for_each(|x| *x /= nv);
        let mut mv = Vec::new();
        let mut w = vec![0.0; n];
        let mut estimate = 0.0;
        for _ in 0..2000 {
            self.apply(&v, &mut mv);
            self.apply_t(&mv, &mut w);
            let nw = norm(&w);
            if nw == 0.0 {
                return 0.0;
            }
            let next = nw;
            v.iter_mut().zip(&w).for_each(|(vi, wi)| *vi = wi / nw);
            if (next - estimate).abs() <= 1e-13 * next {
                estimate = next;
                break;
            }
            estimate = next;
        }
        estimate
    }

    fn project(&self, z: &mut [f64], beta: f64, xi_radius: f64) {
        project_in_place(&mut z[..self.d_prime], xi_radius);
        for j in 0..self.rows.len() {
            let start = self.d_prime + j * self.d;
            project_in_place(&mut z[start..start + self.d], beta);
        }
    }
}

fn project_in_place(x: &mut [f64], radius: f64) {
    let n = norm(x);
    if n > radius {
        let s = radius / n;
        x.iter_mut().for_each(|v| *v *= s);
    }
}

/// Solves from the zero point of the solver coordinates (`ξ = 0`, `θ_j = θ̃_j`).
pub fn solve_distillation(
    problem: &DistillationProblem,
    options: &SolverOptions,
) -> DistillationSolution {
    solve_distillation_from(problem, options, None)
}

/// Like [`solve_distillation`], optionally warm-started from an earlier
/// solution of a problem with the same shapes.
pub fn solve_distillation_from(
    problem: &DistillationProblem,
    options: &SolverOptions,
    warm_start: Option<&DistillationSolution>,
) -> DistillationSolution {
    let wh = Whitened::new(problem);
    let n = wh.n_vars();
    let mut z = vec![0.0; n];
    if let Some(prev) = warm_start {
        if prev.xi.len() == wh.d_prime && prev.thetas.len() == problem.blocks.len() {
            z[..wh.d_prime].copy_from_slice(&prev.xi);
            for (j, (theta, block)) in prev.thetas.iter().zip(&problem.blocks).enumerate() {
                let diff: Vec<f64> = theta
                    .iter()
                    .zip(&block.center)
                    .map(|(a, b)| a - b)
                    .collect();
                let u = problem.gram_chol.mul_upper(&diff);
                let start = wh.d_prime + j * wh.d;
                z[start..start + wh.d].copy_from_slice(&u);
            }
        }
    }
    wh.project(&mut z, problem.beta, problem.xi_radius);

    let lipschitz = 2.0 * wh.top_eigenvalue() * (1.0 + 1e-6);
    let mut r = Vec::new();
    let mut grad = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut residual = 0.0;
    let mut converged = true;

    if lipschitz > 0.0 {
        converged = false;
        let step = 1.0 / lipschitz;
        while iterations < options.max_iter {
            wh.residuals(&z, &mut r);
            if options.record_trace {
                trace.push(r.iter().map(|v| v * v).sum());
            }
            wh.apply_t(&r, &mut grad);
            for ((nx, zi), gi) in next.iter_mut().zip(&z).zip(&grad) {
                *nx = zi - step * 2.0 * gi;
            }
            wh.project(&mut next, problem.beta, problem.xi_radius);
            residual = sqrt(
                next.iter()
                    .zip(&z)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>(),
            );
            core::mem::swap(&mut z, &mut next);
            iterations += 1;
            if residual <= options.tol {
                converged = true;
                break;
            }
        }
    }

    let xi = z[..wh.d_prime].to_vec();
    let thetas: Vec<Vec<f64>> = problem
        .blocks
        .iter()
        .enumerate()
        .map(|(j, b)| {
            let mut t = problem.gram_chol.solve_upper(wh.u_block(&z, j));
            axpy(1.0, &b.center, &mut t);
            t
        })
        .collect();
    let objective = problem.objective(&xi, &thetas);
    if options.record_trace {
        trace.push(objective);
    }
    DistillationSolution {
        xi,
        thetas,
        objective,
        kkt_residual: residual,
        iterations,
        converged,
        trace,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;

    fn identity_chol(d: usize) -> Cholesky {
        Cholesky::new(&Matrix::identity(d)).unwrap()
    }

    #[test]
    fn ball_projection_examples() {
        assert_eq!(project_ball(&[0.3, 0.4], 1.0), vec![0.3, 0.4]);
        assert_eq!(project_ball(&[0.0, 3.0], 1.0), vec![0.0, 1.0]);
    }

    #[test]
    fn ellipsoid_projection_examples() {
        let chol = identity_chol(2);
        assert_eq!(
            project_ellipsoid(&[0.5, 0.5], &[0.5, 0.5], &chol, 1.0),
            vec![0.5, 0.5]
        );
        let p = project_ellipsoid(&[2.0, 0.0], &[0.0, 0.0], &chol, 1.0);
        assert!((p[0] - 1.0).abs() < 1e-15 && p[1].abs() < 1e-15);
    }

    #[test]
    fn zero_data_problem_is_solved_immediately() {
        let d = 3;
        let design = DesignSet {
            pairs: (0..d).map(|i| (i, 0)).collect(),
            feature_matrix: Matrix::identity(d),
        };
        let ctxs = [TaskContext::vertex(2, 0), TaskContext::vertex(2, 1)];
        let chol = Cholesky::new(&Matrix::scaled_identity(d, 1.0)).unwrap();
        let p =
            DistillationProblem::kronecker(&design, &ctxs, vec![vec![0.0; d]; 2], chol, 1.0, 5.0)
                .unwrap();
        let sol = solve_distillation(&p, &SolverOptions::default());
        assert!(sol.converged);
        assert!(sol.objective <= 1e-8);
        assert!(sol.xi.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_nonpositive_radii() {
        let design = DesignSet {
            pairs: vec![(0, 0)],
            feature_matrix: Matrix::identity(1),
        };
        let ctx = [TaskContext::vertex(1, 0)];
        assert!(DistillationProblem::kronecker(
            &design,
            &ctx,
            vec![vec![0.0]],
            identity_chol(1),
            0.0,
            1.0
        )
        .is_err());
        assert!(DistillationProblem::kronecker(
            &design,
            &ctx,
            vec![vec![0.0]],
            identity_chol(1),
            1.0,
            -1.0
        )
        .is_err());
    }

    #[test]
    fn single_task_identity_distillation() {
        // n = 1, ψ = φ: the optimum reproduces θ̂ exactly through ξ.
        let design = DesignSet {
            pairs: vec![(0, 0), (1, 0)],
            feature_matrix: Matrix::from_rows(&[vec![0.7, 0.3], vec![0.2, 0.8]]).unwrap(),
        };
        let ctx = [TaskContext::vertex(1, 0)];
        let center = vec![1.5, -0.5];
        let chol =
            Cholesky::new(&Matrix::from_rows(&[vec![3.0, 0.5], vec![0.5, 2.0]]).unwrap()).unwrap();
        let p =
            DistillationProblem::kronecker(&design, &ctx, vec![center.clone()], chol, 0.1, 10.0)
                .unwrap();
        let sol = solve_distillation(&p, &SolverOptions::default());
        assert!(sol.converged);
        assert!(sol.objective < 1e-12);
        for (x, t) in sol.xi.iter().zip(&sol.thetas[0]) {
            assert!((x - t).abs() < 1e-6);
        }
    }
}
