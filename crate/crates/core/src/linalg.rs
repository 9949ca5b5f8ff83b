//! Dense complex linear algebra helpers.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Solves `a x = b` by partial-pivot LU.
pub fn lu_solve(a: DMatrix<C64>, b: &DVector<C64>) -> Result<DVector<C64>> {
    a.lu().solve(b).ok_or(Error::SingularMatrix)
}

/// Maximum absolute column sum.
pub fn norm_1(a: &DMatrix<C64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// 1-norm condition number, computed from the explicit inverse.
/// Returns `f64::INFINITY` for singular matrices.
pub fn condition_1(a: &DMatrix<C64>) -> f64 {
    match a.clone().try_inverse() {
        Some(inv) => norm_1(a) * norm_1(&inv),
        None => f64::INFINITY,
    }
}

/// Largest singular value of a linear map given by `apply` and its adjoint
/// `apply_adjoint`, by Lanczos iteration on `A* A` with full
/// reorthogonalization. `dim` is the dimension of the domain.
pub fn largest_singular_value<F, G>(dim: usize, apply: F, apply_adjoint: G, max_iter: usize) -> f64
where
    F: Fn(&DVector<C64>) -> DVector<C64>,
    G: Fn(&DVector<C64>) -> DVector<C64>,
{
    if dim == 0 {
        return 0.0;
    }
    let mut q = DVector::from_fn(dim, |k, _| {
        let x = k as f64 + 1.0;
        C64::new(1.0 + 0.5 * (0.7 * x).sin(), 0.3 * (1.3 * x).cos())
    });
    q /= C64::from(q.norm());
    let mut basis: Vec<DVector<C64>> = Vec::with_capacity(max_iter);
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut last = 0.0;
    let steps = max_iter.clamp(1, dim);
    for k in 0..steps {
        let mut w = apply_adjoint(&apply(&q));
        let alpha = q.dotc(&w).re;
        basis.push(q.clone());
        alphas.push(alpha);
        // Two passes of classical Gram–Schmidt against every basis vector.
        for _ in 0..2 {
            for b in &basis {
                let c = b.dotc(&w);
                w.axpy(-c, b, C64::from(1.0));
            }
        }
        let beta = w.norm();
        let estimate = tridiagonal_max(&alphas, &betas);
        if k > 2 && (estimate - last).abs() <= 1e-13 * estimate.max(1e-300) {
            last = estimate;
            break;
        }
        last = estimate;
        if beta <= 1e-14 * estimate.max(1e-300) {
            break;
        }
        betas.push(beta);
        q = w / C64::from(beta);
    }
    last.max(0.0).sqrt()
}

fn tridiagonal_max(alphas: &[f64], betas: &[f64]) -> f64 {
    let n = alphas.len();
    let mut t = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        t[(i, i)] = alphas[i];
        if i + 1 < n {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    t.symmetric_eigenvalues().iter().copied().fold(f64::MIN, f64::max)
}

/// Spectral norm of a dense matrix.
pub fn spectral_norm(a: &DMatrix<C64>) -> f64 {
    largest_singular_value(a.ncols(), |x| a * x, |y| a.ad_mul(y), 200.min(a.ncols()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sample(n: usize) -> DMatrix<C64> {
        DMatrix::from_fn(n, n, |i, j| {
            C64::new(((i * 7 + j * 3) % 11) as f64 - 5.0, ((i + 2 * j) % 5) as f64 - 2.0)
                + if i == j { C64::new(20.0, 0.0) } else { C64::new(0.0, 0.0) }
        })
    }

    #[test]
    fn solve_recovers_known_solution() {
        let a = sample(12);
        let x = DVector::from_fn(12, |k, _| C64::new(k as f64, -1.0));
        let b = &a * &x;
        let sol = lu_solve(a, &b).unwrap();
        assert!((sol - x).norm() < 1e-11);
    }

    #[test]
    fn singular_system_is_rejected() {
        let a = DMatrix::<C64>::zeros(3, 3);
        let b = DVector::from_element(3, C64::new(1.0, 0.0));
        assert_eq!(lu_solve(a, &b), Err(Error::SingularMatrix));
    }

    #[test]
    fn lanczos_matches_svd() {
        let a = sample(30);
        let exact = a.clone().svd(false, false).singular_values.max();
        assert_relative_eq!(spectral_norm(&a), exact, max_relative = 1e-10);
    }

    #[test]
    fn condition_of_identity_is_one() {
        let a = DMatrix::<C64>::identity(5, 5);
        assert_relative_eq!(condition_1(&a), 1.0);
    }
}
