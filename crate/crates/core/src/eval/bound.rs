use nalgebra::{DMatrix, DVector};

use crate::linalg::{pinv_solve, sorted_svd};

/// Relative tolerance defining `rank(A)` and `w* = A^+ b`.
pub const RANK_TOL: f64 = 1e-10;

/// Right-hand side of the rank-`r` error bound, term by term.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundTerms {
    /// `||b_t - A_t w*|| / sigma_hat_r`.
    pub residual_term: f64,
    pub epsilon: f64,
    /// `(d - r) * epsilon`.
    pub epsilon_term: f64,
    /// `(d - r) * sigma_r^(p-1)`.
    pub bias_term: f64,
    pub total: f64,
    pub rank_a: usize,
    pub w_star: DVector<f64>,
}

fn pow_or_zero(s: f64, e: f64) -> f64 {
    if s > 0.0 {
        s.powf(e)
    } else {
        0.0
    }
}

/// Evaluates the bound on `||w_{t,r} - w*||` for the true system `(A, b)`,
/// the sampled `(A_t, b_t)`, rank `r` and Picard exponent `p`.
///
/// Singular vectors of `A_t` are matched to those of `A` by index in sorted
/// order, with the sign of each `v_hat_j` chosen to maximize `v_hat_j^T v_j`.
pub fn theorem_bound(a: &DMatrix<f64>, b: &DVector<f64>, a_t: &DMatrix<f64>, b_t: &DVector<f64>, r: usize, p: f64) -> BoundTerms {
    let d = a.nrows();
    assert!(a.is_square() && a_t.shape() == a.shape() && b.len() == d && b_t.len() == d);
    assert!((1..=d).contains(&r), "rank {r} outside [1, {d}]");

    let svd = sorted_svd(a.clone());
    let hat = sorted_svd(a_t.clone());
    let s1 = svd.sigma[0];
    let rank_a = svd.sigma.iter().filter(|&&s| s > RANK_TOL * s1).count();
    let w_star = pinv_solve(a, b, RANK_TOL);

    let sigma_r = if r <= rank_a { svd.sigma[r - 1] } else { 0.0 };
    let sigma_hat_r = hat.sigma[r - 1];
    let e = p - 1.0;

    let residual = (b_t - a_t * &w_star).norm();
    let residual_term = if sigma_hat_r > 0.0 {
        residual / sigma_hat_r
    } else {
        f64::INFINITY
    };

    let cap = rank_a as f64 * pow_or_zero(s1, e);
    let mut matched = 0.0;
    for j in 0..rank_a {
        let v = svd.v.column(j);
        let vh = hat.v.column(j);
        let sign = if vh.dot(&v) < 0.0 { -1.0 } else { 1.0 };
        matched += (v * pow_or_zero(svd.sigma[j], e) - vh * (sign * pow_or_zero(hat.sigma[j], e))).norm();
    }
    matched += pow_or_zero(sigma_hat_r, e) - pow_or_zero(sigma_r, e);
    let epsilon = cap.min(matched).max(0.0);

    let dr = (d - r) as f64;
    let epsilon_term = dr * epsilon;
    let bias_term = dr * pow_or_zero(sigma_r, e);
    BoundTerms {
        residual_term,
        epsilon,
        epsilon_term,
        bias_term,
        total: residual_term + epsilon_term + bias_term,
        rank_a,
        w_star,
    }
}
