use lifelong_core::linalg::{kron, Cholesky, GramTracker, Matrix};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dense(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

fn max_abs(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).abs().max()
}

/// Λ, Λ⁻¹ and log det Λ recomputed from scratch.
fn from_scratch(xs: &[Vec<f64>], lambda: f64) -> (DMatrix<f64>, DMatrix<f64>, f64) {
    let d = xs[0].len();
    let mut g = DMatrix::<f64>::identity(d, d) * lambda;
    for x in xs {
        let v = DVector::from_column_slice(x);
        g += &v * v.transpose();
    }
    let chol = g.clone().cholesky().expect("spd");
    let logdet = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    (g.clone(), chol.inverse(), logdet)
}

#[test]
fn thousand_absorbs_match_dense_recomputation() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let d = 8;
    let mut tracker = GramTracker::new(d, 1.0).unwrap();
    let xs: Vec<Vec<f64>> = (0..1000)
        .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    for x in &xs {
        tracker.absorb(x, 0.0).unwrap();
    }
    let (g, inv, logdet) = from_scratch(&xs, 1.0);
    assert!(max_abs(&dense(tracker.matrix()), &g) < 1e-9);
    assert!(max_abs(&dense(tracker.inverse()), &inv) <= 1e-6);
    assert!((tracker.logdet() - logdet).abs() <= 1e-8);
}

#[test]
fn ridge_matches_normal_equations() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let d = 5;
    let mut tracker = GramTracker::new(d, 0.5).unwrap();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for _ in 0..40 {
        let x: Vec<f64> = (0..d).map(|_| rng.random()).collect();
        let y: f64 = rng.random_range(-2.0..2.0);
        tracker.absorb(&x, y).unwrap();
        xs.push(x);
        ys.push(y);
    }
    let a = DMatrix::from_fn(xs.len(), d, |i, j| xs[i][j]);
    let b = DVector::from_column_slice(&ys);
    let lhs = a.transpose() * &a + DMatrix::identity(d, d) * 0.5;
    let want = lhs.lu().solve(&(a.transpose() * b)).unwrap();
    let got = tracker.ridge_solve().weights;
    for i in 0..d {
        assert!((got[i] - want[i]).abs() < 1e-10);
    }
}

#[test]
fn cholesky_matches_dense() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 6;
    let b = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let spd = &b * b.transpose() + DMatrix::identity(n, n) * 0.1;
    let ours = Cholesky::new(
        &Matrix::from_rows(
            &(0..n)
                .map(|i| spd.row(i).iter().copied().collect())
                .collect::<Vec<Vec<f64>>>(),
        )
        .unwrap(),
    )
    .unwrap();
    let theirs = spd.clone().cholesky().unwrap();
    assert!(max_abs(&dense(ours.lower()), &theirs.l()) < 1e-10);
    let rhs: Vec<f64> = (0..n).map(|i| i as f64 - 2.0).collect();
    let x = ours.solve(&rhs);
    let want = theirs.solve(&DVector::from_column_slice(&rhs));
    for i in 0..n {
        assert!((x[i] - want[i]).abs() < 1e-9);
    }
    assert!((ours.logdet() - spd.determinant().ln()).abs() < 1e-9);
}

#[test]
fn kron_matches_dense_kronecker() {
    let a = [0.2, 0.5, 0.3];
    let b = [0.6, 0.4];
    let ours = kron(&a, &b);
    let theirs =
        DMatrix::from_column_slice(3, 1, &a).kronecker(&DMatrix::from_column_slice(2, 1, &b));
    for (x, y) in ours.iter().zip(theirs.iter()) {
        assert_eq!(x, y);
    }
}

fn sample_vectors(d: usize, n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-1.0f64..1.0, d), n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn inverse_stays_accurate(xs in sample_vectors(4, 1..300), lambda in 0.1f64..3.0) {
        let mut t = GramTracker::new(4, lambda).unwrap();
        for x in &xs {
            t.absorb(x, 1.0).unwrap();
        }
        let (_, inv, logdet) = from_scratch(&xs, lambda);
        prop_assert!(max_abs(&dense(t.inverse()), &inv) <= 1e-8);
        prop_assert!((t.logdet() - logdet).abs() <= 1e-8);
        prop_assert!(t.matrix().asymmetry() == 0.0);
    }

    #[test]
    fn logdet_is_monotone(xs in sample_vectors(3, 1..100)) {
        let mut t = GramTracker::new(3, 1.0).unwrap();
        let mut last = t.logdet();
        for x in &xs {
            t.absorb(x, 0.0).unwrap();
            prop_assert!(t.logdet() >= last);
            last = t.logdet();
        }
    }

    #[test]
    fn elliptical_potential_bound(xs in sample_vectors(3, 1..200), lambda in 0.5f64..2.0) {
        // Σ min(‖x_t‖²_{Λ_t⁻¹}, 1) ≤ 2 log(det Λ_{n+1} / det Λ_1)
        let mut t = GramTracker::new(3, lambda).unwrap();
        let start = t.logdet();
        let mut potential = 0.0;
        for x in &xs {
            let w = t.weighted_norm(x);
            potential += (w * w).min(1.0);
            t.absorb(x, 0.0).unwrap();
        }
        prop_assert!(potential <= 2.0 * (t.logdet() - start) + 1e-12);
    }

    #[test]
    fn gram_is_permutation_invariant(xs in sample_vectors(3, 2..40), seed in any::<u64>()) {
        let mut a = GramTracker::new(3, 1.0).unwrap();
        for x in &xs {
            a.absorb(x, 0.0).unwrap();
        }
        let mut shuffled = xs.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, rng.random_range(0..=i));
        }
        let mut b = GramTracker::new(3, 1.0).unwrap();
        for x in &shuffled {
            b.absorb(x, 0.0).unwrap();
        }
        prop_assert!(a.matrix().max_abs_diff(b.matrix()) < 1e-12);
    }
}
