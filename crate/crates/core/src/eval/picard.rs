use nalgebra::{DMatrix, DVector};

use crate::linalg::sorted_svd;

/// Singular values below this fraction of `sigma_1` are left out of the fit.
pub const PICARD_SIGMA_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct PicardProfile {
    pub sigma: Vec<f64>,
    /// `|u_i^T b|`.
    pub proj: Vec<f64>,
    /// Largest `p` with `proj_i <= sigma_i^p` at every retained index;
    /// `+inf` when no index constrains `p` from above, `None` when no `p` works.
    pub p_fit: Option<f64>,
    /// Least-squares slope of `log proj_i` on `log sigma_i` through the origin.
    pub p_lsq: Option<f64>,
}

impl PicardProfile {
    /// Indices (among those above the floor) where `proj_i > sigma_i^p`.
    pub fn violations(&self, p: f64) -> Vec<usize> {
        self.retained()
            .filter(|&i| self.proj[i] > self.sigma[i].powf(p) * (1.0 + 1e-12))
            .collect()
    }

    fn retained(&self) -> impl Iterator<Item = usize> + '_ {
        let s1 = self.sigma.first().copied().unwrap_or(0.0);
        (0..self.sigma.len()).filter(move |&i| self.sigma[i] > PICARD_SIGMA_FLOOR * s1)
    }

    /// `p_fit` floored at `1 + 1e-6`, the smallest exponent the bound accepts.
    pub fn p_for_bound(&self) -> f64 {
        match self.p_fit {
            Some(p) if p.is_finite() => p.max(1.0 + 1e-6),
            _ => 1.0 + 1e-6,
        }
    }
}

pub fn picard_profile(a: &DMatrix<f64>, b: &DVector<f64>) -> PicardProfile {
    assert_eq!(a.nrows(), a.ncols(), "picard_profile needs a square matrix");
    assert_eq!(a.nrows(), b.len());
    let svd = sorted_svd(a.clone());
    let sigma: Vec<f64> = svd.sigma.iter().copied().collect();
    let proj: Vec<f64> = (0..sigma.len()).map(|i| svd.u.column(i).dot(b).abs()).collect();
    let mut profile = PicardProfile {
        sigma,
        proj,
        p_fit: None,
        p_lsq: None,
    };

    // log proj <= p log sigma: an upper bound on p where sigma < 1, a lower
    // bound where sigma > 1, and a p-free check where sigma = 1
    let mut upper = f64::INFINITY;
    let mut lower = f64::NEG_INFINITY;
    let mut feasible = true;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for i in profile.retained().collect::<Vec<_>>() {
        let (s, q) = (profile.sigma[i], profile.proj[i]);
        if q == 0.0 {
            continue;
        }
        let (ls, lq) = (s.ln(), q.ln());
        sxy += ls * lq;
        sxx += ls * ls;
        if ls < 0.0 {
            upper = upper.min(lq / ls);
        } else if ls > 0.0 {
            lower = lower.max(lq / ls);
        } else if q > 1.0 {
            feasible = false;
        }
    }
    if feasible && lower <= upper {
        profile.p_fit = Some(upper);
    }
    if sxx > 0.0 {
        profile.p_lsq = Some(sxy / sxx);
    }
    profile
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sorted_svd;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, n, |_, _| rng.random_range(-0.3..0.3))
    }

    #[test]
    fn constructed_equality_case() {
        let a = random_matrix(6, 1);
        let svd = sorted_svd(a.clone());
        let mut b = DVector::zeros(6);
        for i in 0..6 {
            b.axpy(svd.sigma[i].powi(2), &svd.u.column(i), 1.0);
        }
        let prof = picard_profile(&a, &b);
        assert!(prof.p_fit.unwrap() >= 2.0 - 1e-6);
        assert!(prof.violations(2.0).is_empty());
        assert!(prof.sigma.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn last_direction_violates() {
        let mut a = random_matrix(5, 2);
        let svd = sorted_svd(a.clone());
        // shrink the last singular value to nearly zero, above the fit floor
        let mut s = svd.sigma.clone();
        s[4] = 1e-8;
        a = &svd.u * DMatrix::from_diagonal(&s) * svd.v.transpose();
        let b = svd.u.column(4).into_owned();
        let prof = picard_profile(&a, &b);
        assert!(prof.violations(1.01).contains(&4));
        assert!(prof.p_fit.unwrap() < 1e-6);
    }

    #[test]
    fn floor_at_one() {
        let prof = PicardProfile {
            sigma: vec![0.5],
            proj: vec![0.5],
            p_fit: Some(1.0),
            p_lsq: Some(1.0),
        };
        assert_eq!(prof.p_for_bound(), 1.0 + 1e-6);
    }
}
