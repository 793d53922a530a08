//! Small dense linear algebra, generic over [`Scalar`] so regularizer paths
//! stay differentiable (Cholesky and triangular solves unroll onto the tape).
//! f64-only oracles (full SVD) live behind nalgebra.

use crate::scalar::Scalar;

pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = a[0] * b[0];
    for i in 1..a.len() {
        acc = acc + a[i] * b[i];
    }
    acc
}

pub fn norm_sq<S: Scalar>(a: &[S]) -> S {
    dot(a, a)
}

/// y = A x for row-major square-or-rectangular A (rows x cols).
pub fn matvec<S: Scalar>(a: &[S], rows: usize, cols: usize, x: &[S]) -> Vec<S> {
    debug_assert_eq!(a.len(), rows * cols);
    debug_assert_eq!(x.len(), cols);
    (0..rows).map(|r| dot(&a[r * cols..(r + 1) * cols], x)).collect()
}

/// AᵀA for row-major A (rows x cols) -> (cols x cols), symmetric.
pub fn gram<S: Scalar>(a: &[S], rows: usize, cols: usize) -> Vec<S> {
    let mut g = Vec::with_capacity(cols * cols);
    for i in 0..cols {
        for j in 0..cols {
            let mut acc = a[i] * a[j];
            for r in 1..rows {
                acc = acc + a[r * cols + i] * a[r * cols + j];
            }
            g.push(acc);
        }
    }
    let _ = rows;
    g
}

/// Lower Cholesky factor of a symmetric positive definite matrix (row-major,
/// n x n). Returns `None` when a pivot is non-positive, i.e. the matrix is
/// numerically not positive definite.
pub fn cholesky<S: Scalar>(a: &[S], n: usize) -> Option<Vec<S>> {
    debug_assert_eq!(a.len(), n * n);
    let zero = a[0].lift(0.0);
    let mut l = vec![zero; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum = sum - l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if sum.val() <= 0.0 || !sum.val().is_finite() {
                    return None;
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// Solves L Lᵀ x = b given the lower factor from [`cholesky`].
pub fn cholesky_solve<S: Scalar>(l: &[S], n: usize, b: &[S]) -> Vec<S> {
    let mut y = b.to_vec();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s = s - l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s = s - l[k * n + i] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    y
}

/// Estimate of ‖Λ⁻¹‖₂² (= 1/σ_min²) by inverse vector iteration on M = ΛᵀΛ,
/// factorized once by Cholesky. The estimate 1/⟨M⁻¹v, v⟩ of σ_min² approaches
/// the true value from above, so the derived σ_min estimates are monotonically
/// non-increasing in the iteration count.
///
/// `start` is the (deterministic) start vector; `None` on Cholesky breakdown.
pub fn inv_norm_sq_estimate<S: Scalar>(
    lambda: &[S],
    n: usize,
    iters: usize,
    start: &[f64],
) -> Option<S> {
    debug_assert_eq!(start.len(), n);
    let m = gram(lambda, n, n);
    let l = cholesky(&m, n)?;
    let lift = |c: f64| lambda[0].lift(c);
    let nrm = (start.iter().map(|s| s * s).sum::<f64>()).sqrt();
    let mut v: Vec<S> = start.iter().map(|&s| lift(s / nrm)).collect();
    let mut lam_inv = lift(0.0);
    for _ in 0..iters.max(1) {
        let w = cholesky_solve(&l, n, &v);
        lam_inv = dot(&w, &v); // ⟨M⁻¹v, v⟩ ≈ 1/λ_min(M) = ‖Λ⁻¹‖²
        if lam_inv.val() <= 0.0 || !lam_inv.val().is_finite() {
            return None;
        }
        let wn = norm_sq(&w).sqrt();
        v = w.iter().map(|&wi| wi / wn).collect();
    }
    Some(lam_inv)
}

/// ‖A⁻¹‖₂² of a d x d block (d ∈ {1, 2}) in closed form: 1/λ_min(AᵀA).
/// Returns `None` when the block is exactly singular.
pub fn inv_norm_sq_small<S: Scalar>(a: &[S], d: usize) -> Option<S> {
    match d {
        1 => {
            let s = a[0] * a[0];
            if s.val() == 0.0 {
                None
            } else {
                Some(s.recip())
            }
        }
        2 => {
            let t = norm_sq(a);
            let det = a[0] * a[3] - a[1] * a[2];
            let disc = (t * t - (det * det).scale(4.0)).relu().sqrt();
            let lam_min = (t - disc).scale(0.5);
            if lam_min.val() <= 0.0 {
                None
            } else {
                Some(lam_min.recip())
            }
        }
        _ => unreachable!("closed-form block norm only defined for d <= 2"),
    }
}

/// Smallest singular value of a d x d block (d ∈ {1, 2}), f64 path.
pub fn sigma_min_small(a: &[f64], d: usize) -> f64 {
    match d {
        1 => a[0].abs(),
        2 => {
            let t: f64 = a.iter().map(|x| x * x).sum();
            let det = a[0] * a[3] - a[1] * a[2];
            let disc = (t * t - 4.0 * det * det).max(0.0).sqrt();
            (0.5 * (t - disc)).max(0.0).sqrt()
        }
        _ => unreachable!(),
    }
}

/// Dense SVD smallest singular value (oracle / PCA path).
pub fn sigma_min_svd(a: &[f64], rows: usize, cols: usize) -> f64 {
    let m = nalgebra::DMatrix::from_row_slice(rows, cols, a);
    let svd = m.svd(false, false);
    svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Dense LU solve of `A x = b` (row-major `n x n`); `None` when singular.
pub fn lu_solve(a: &[f64], n: usize, b: &[f64]) -> Option<Vec<f64>> {
    let m = nalgebra::DMatrix::from_row_slice(n, n, a);
    let rhs = nalgebra::DVector::from_column_slice(b);
    let x = m.lu().solve(&rhs)?;
    let v: Vec<f64> = x.iter().copied().collect();
    v.iter().all(|t| t.is_finite()).then_some(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, rng: &mut impl Rng) -> Vec<f64> {
        let a: Vec<f64> = (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut m = gram(&a, n, n);
        for i in 0..n {
            m[i * n + i] += 0.5; // keep it well inside PD
        }
        m
    }

    #[test]
    fn cholesky_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in [1usize, 3, 7] {
            let m = random_spd(n, &mut rng);
            let l = cholesky(&m, n).expect("spd");
            for i in 0..n {
                for j in 0..n {
                    let mut s = 0.0;
                    for k in 0..n {
                        s += l[i * n + k] * l[j * n + k];
                    }
                    assert!((s - m[i * n + j]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn cholesky_solve_matches_direct() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 6;
        let m = random_spd(n, &mut rng);
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let l = cholesky(&m, n).unwrap();
        let x = cholesky_solve(&l, n, &b);
        let ax = matvec(&m, n, n, &x);
        for i in 0..n {
            assert!((ax[i] - b[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let m = vec![1.0, 2.0, 2.0, 1.0]; // eigenvalues 3, -1
        assert!(cholesky(&m, 2).is_none());
    }

    #[test]
    fn inverse_iteration_approaches_svd_sigma_min_from_above() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let n = 8;
            let a: Vec<f64> = (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let truth = sigma_min_svd(&a, n, n);
            let start: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut prev = f64::INFINITY;
            for iters in 1..=30 {
                let est = inv_norm_sq_estimate(&a, n, iters, &start).unwrap();
                let sigma = est.sqrt().recip();
                assert!(sigma >= truth - 1e-9, "estimate below truth");
                assert!(sigma <= prev + 1e-12, "estimate not monotone");
                prev = sigma;
            }
            assert!((prev - truth).abs() <= 1e-8 * truth.max(1e-16), "did not converge");
        }
    }

    #[test]
    fn small_block_norms_match_svd() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let a: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
            let sv = sigma_min_svd(&a, 2, 2);
            assert!((sigma_min_small(&a, 2) - sv).abs() < 1e-12);
            let inv = inv_norm_sq_small(&a, 2).unwrap();
            assert!((inv - 1.0 / (sv * sv)).abs() < 1e-6 * (1.0 / (sv * sv)));
        }
    }
}
