//! Small dense linear-algebra helpers built on nalgebra.
//!
//! These back the core diagonalization inside the incremental factorization as
//! well as the dense oracles used by the evaluation code.

use nalgebra::{DMatrix, DVector};

use crate::scalar::Real;

/// A thin SVD `m = u * diag(sigma) * v^T` with `sigma` sorted non-increasing.
#[derive(Debug, Clone)]
pub struct DenseSvd<T: Real> {
    pub u: DMatrix<T>,
    pub sigma: DVector<T>,
    pub v: DMatrix<T>,
}

impl<T: Real> DenseSvd<T> {
    /// Number of singular values above `tol * sigma_1` (`tol` relative).
    pub fn numerical_rank(&self, rel_tol: T) -> usize {
        match self.sigma.iter().next() {
            Some(&s1) if s1 > T::zero() => self.sigma.iter().filter(|&&s| s > rel_tol * s1).count(),
            _ => 0,
        }
    }

    pub fn reconstruct(&self) -> DMatrix<T> {
        let mut us = self.u.clone();
        for (j, s) in self.sigma.iter().enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        us * self.v.transpose()
    }
}

/// Thin SVD with singular values sorted non-increasing.
///
/// Panics if the dense SVD fails to converge, which does not happen for finite
/// input.
pub fn sorted_svd<T: Real>(m: DMatrix<T>) -> DenseSvd<T> {
    let (rows, cols) = m.shape();
    if rows.min(cols) == 0 {
        return DenseSvd {
            u: DMatrix::zeros(rows, 0),
            sigma: DVector::zeros(0),
            v: DMatrix::zeros(cols, 0),
        };
    }
    let (u, sigma, v) = T::thin_svd(&m).expect("dense SVD did not converge");
    let mut order: Vec<usize> = (0..sigma.len()).collect();
    // the backend already sorts; this only guards the contract
    order.sort_by(|&a, &b| sigma[b].partial_cmp(&sigma[a]).unwrap_or(std::cmp::Ordering::Equal));
    if order.iter().enumerate().all(|(i, &o)| i == o) {
        return DenseSvd { u, sigma, v };
    }
    DenseSvd {
        u: u.select_columns(&order),
        sigma: DVector::from_fn(order.len(), |i, _| sigma[order[i]]),
        v: v.select_columns(&order),
    }
}

/// Singular values of `m`, non-increasing.
pub fn singular_values<T: Real>(m: &DMatrix<T>) -> DVector<T> {
    if m.nrows().min(m.ncols()) == 0 {
        return DVector::zeros(0);
    }
    let mut s = T::singular_values(m).expect("dense SVD did not converge");
    s.as_mut_slice()
        .sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    s
}

/// Minimum-norm solution `A^+ b`, treating singular values at or below
/// `rel_tol * sigma_1` as zero.
pub fn pinv_solve<T: Real>(a: &DMatrix<T>, b: &DVector<T>, rel_tol: T) -> DVector<T> {
    let svd = sorted_svd(a.clone());
    let rank = svd.numerical_rank(rel_tol);
    truncated_solve_from(&svd, b, rank)
}

/// `A_r^+ b` where `A_r` keeps the top `r` singular triples of `A`.
/// Singular values that are exactly zero are never inverted.
pub fn truncated_solve<T: Real>(a: &DMatrix<T>, b: &DVector<T>, r: usize) -> DVector<T> {
    let svd = sorted_svd(a.clone());
    truncated_solve_from(&svd, b, r)
}

pub fn truncated_solve_from<T: Real>(svd: &DenseSvd<T>, b: &DVector<T>, r: usize) -> DVector<T> {
    let keep = r.min(svd.sigma.len());
    let mut w = DVector::zeros(svd.v.nrows());
    for i in 0..keep {
        let s = svd.sigma[i];
        if s <= T::zero() {
            break;
        }
        let coef = svd.u.column(i).dot(b) / s;
        w.axpy(coef, &svd.v.column(i), T::one());
    }
    w
}

/// Best rank-`r` approximation of `m` in any unitarily invariant norm.
pub fn best_rank_approx<T: Real>(m: &DMatrix<T>, r: usize) -> DMatrix<T> {
    let mut svd = sorted_svd(m.clone());
    for i in r.min(svd.sigma.len())..svd.sigma.len() {
        svd.sigma[i] = T::zero();
    }
    svd.reconstruct()
}

/// `max |Q^T Q - I|` entrywise.
pub fn orthonormality_error<T: Real>(q: &DMatrix<T>) -> T {
    let g = q.tr_mul(q);
    let mut worst = T::zero();
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let target = if i == j { T::one() } else { T::zero() };
            worst = worst.max((g[(i, j)] - target).abs());
        }
    }
    worst
}

/// `||a - b||_F / ||b||_F`, or the absolute error when `b` is zero.
pub fn relative_frobenius_error<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> T {
    let denom = b.norm();
    let diff = (a - b).norm();
    if denom > T::zero() {
        diff / denom
    } else {
        diff
    }
}
