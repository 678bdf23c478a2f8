use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use super::{EnvError, SimRng, Simulator, Step};
use crate::features::{FeatureMap, FeatureVector};
use crate::linalg::{pinv_solve, sorted_svd};
use crate::scalar::Real;

/// Random finite MDP description for config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticMdpConfig {
    pub n_states: usize,
    pub n_features: usize,
    pub gamma: f64,
    #[serde(default)]
    pub lambda: f64,
    /// Seed of the MDP itself (not of the sampled stream).
    pub mdp_seed: u64,
    /// When set, rewards are chosen so that `|u_i^T b| <= sigma_i^p`.
    #[serde(default)]
    pub picard_p: Option<f64>,
}

/// The closed-form system and its minimum-norm solution.
#[derive(Debug, Clone)]
pub struct TrueSystem {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub w_star: DVector<f64>,
}

/// Finite Markov chain induced by a fixed policy, with linear features.
///
/// States are passed to the feature map and the simulator interface as the
/// one-element slice `[index as f64]`.
#[derive(Debug, Clone)]
pub struct SyntheticMdp {
    p: DMatrix<f64>,
    r: DVector<f64>,
    x: DMatrix<f64>,
    gamma: f64,
    lambda: f64,
    stationary: DVector<f64>,
    // cumulative rows of P for sampling
    cdf: Vec<Vec<f64>>,
}

impl SyntheticMdp {
    pub fn new(p: DMatrix<f64>, r: DVector<f64>, x: DMatrix<f64>, gamma: f64, lambda: f64) -> Result<Self, EnvError> {
        let n = p.nrows();
        let mut bad = Vec::new();
        if n == 0 || p.ncols() != n {
            bad.push(format!("P must be square and non-empty, got {}x{}", p.nrows(), p.ncols()));
        }
        if r.len() != n {
            bad.push(format!("reward length {} != {n}", r.len()));
        }
        if x.nrows() != n || x.ncols() == 0 {
            bad.push(format!("X must be {n} x d with d >= 1, got {}x{}", x.nrows(), x.ncols()));
        }
        if !(0.0..=1.0).contains(&gamma) || !(0.0..=1.0).contains(&lambda) {
            bad.push("gamma and lambda must lie in [0, 1]".to_string());
        }
        for (i, row) in p.row_iter().enumerate() {
            if row.iter().any(|&v| !(v >= 0.0)) || (row.sum() - 1.0).abs() > 1e-10 {
                bad.push(format!("row {i} of P is not a probability distribution"));
            }
        }
        if !bad.is_empty() {
            return Err(EnvError::InvalidConfig(bad.join("; ")));
        }
        let stationary = stationary_distribution(&p);
        let cdf = p
            .row_iter()
            .map(|row| {
                let mut acc = 0.0;
                row.iter()
                    .map(|&v| {
                        acc += v;
                        acc
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            p,
            r,
            x,
            gamma,
            lambda,
            stationary,
            cdf,
        })
    }

    /// Dense random chain: transition rows and features uniform on [0, 1),
    /// rewards uniform on [-1, 1).
    pub fn random(n: usize, d: usize, gamma: f64, lambda: f64, seed: u64) -> Result<Self, EnvError> {
        let mut rng = SimRng::seed_from_u64(seed);
        let mut p = DMatrix::from_fn(n, n, |_, _| rng.random_range(0.05..1.0));
        for mut row in p.row_iter_mut() {
            let s = row.sum();
            row /= s;
        }
        let x = DMatrix::from_fn(n, d, |_, _| rng.random_range(0.0..1.0));
        let r = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        Self::new(p, r, x, gamma, lambda)
    }

    /// Random chain whose rewards make the closed-form system satisfy the
    /// discrete Picard condition with exponent `p_exp`: `b = sum_i c_i sigma_i^p u_i`
    /// with `|c_i| <= 1`. Requires `d <= n` so every such `b` is reachable.
    pub fn random_picard(n: usize, d: usize, gamma: f64, lambda: f64, p_exp: f64, seed: u64) -> Result<Self, EnvError> {
        if d > n {
            return Err(EnvError::InvalidConfig(format!("Picard construction needs d <= n, got d = {d}, n = {n}")));
        }
        let mut mdp = Self::random(n, d, gamma, lambda, seed)?;
        let mut rng = SimRng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let m = mdp.reward_map()?;
        let (a, _) = mdp.system_parts(&m);
        let svd = sorted_svd(a);
        let mut b = DVector::zeros(d);
        for i in 0..d {
            let c: f64 = rng.random_range(0.2..1.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            b.axpy(c * svd.sigma[i].powf(p_exp), &svd.u.column(i), 1.0);
        }
        mdp.r = pinv_solve(&m, &b, 1e-14);
        Ok(mdp)
    }

    pub fn from_config(cfg: &SyntheticMdpConfig) -> Result<Self, EnvError> {
        match cfg.picard_p {
            Some(p) => Self::random_picard(cfg.n_states, cfg.n_features, cfg.gamma, cfg.lambda, p, cfg.mdp_seed),
            None => Self::random(cfg.n_states, cfg.n_features, cfg.gamma, cfg.lambda, cfg.mdp_seed),
        }
    }

    pub fn n_states(&self) -> usize {
        self.p.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }

    pub fn transition_matrix(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn rewards(&self) -> &DVector<f64> {
        &self.r
    }

    pub fn feature_matrix(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn stationary(&self) -> &DVector<f64> {
        &self.stationary
    }

    /// `X^T D (I - gamma lambda P)^-1`, the map from rewards to `b`.
    fn reward_map(&self) -> Result<DMatrix<f64>, EnvError> {
        let n = self.n_states();
        let m = DMatrix::identity(n, n) - &self.p * (self.gamma * self.lambda);
        let svd = sorted_svd(m.clone());
        if svd.sigma[n - 1] <= 1e-12 * svd.sigma[0] {
            return Err(EnvError::SingularSystem);
        }
        let inv = m.lu().try_inverse().ok_or(EnvError::SingularSystem)?;
        let mut xd = self.x.transpose();
        for (j, mut col) in xd.column_iter_mut().enumerate() {
            col *= self.stationary[j];
        }
        Ok(xd * inv)
    }

    fn system_parts(&self, m: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
        let n = self.n_states();
        let a = m * (DMatrix::identity(n, n) - &self.p * self.gamma) * &self.x;
        let b = m * &self.r;
        (a, b)
    }

    /// Closed-form `A`, `b` and `w* = A^+ b`.
    pub fn true_system(&self) -> Result<TrueSystem, EnvError> {
        let m = self.reward_map()?;
        let (a, b) = self.system_parts(&m);
        let w_star = pinv_solve(&a, &b, 1e-10);
        Ok(TrueSystem { a, b, w_star })
    }

    /// True state values `(I - gamma P)^-1 r`.
    pub fn values(&self) -> Result<DVector<f64>, EnvError> {
        let n = self.n_states();
        let m = DMatrix::identity(n, n) - &self.p * self.gamma;
        m.lu().solve(&self.r).ok_or(EnvError::SingularSystem)
    }

    pub fn tabular_features(&self) -> TabularFeatures {
        TabularFeatures { x: self.x.clone() }
    }

    fn sample_from(&self, cdf: &[f64], rng: &mut SimRng) -> usize {
        let u: f64 = rng.random();
        cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1)
    }
}

/// Left null vector of `I - P`, normalized to sum one.
fn stationary_distribution(p: &DMatrix<f64>) -> DVector<f64> {
    let n = p.nrows();
    let m = DMatrix::identity(n, n) - p.transpose();
    let svd = sorted_svd(m);
    let mut v = svd.v.column(n - 1).into_owned();
    let s = v.sum();
    v /= s;
    v.apply(|x| *x = x.max(0.0));
    let s = v.sum();
    v / s
}

impl Simulator for SyntheticMdp {
    fn state_dim(&self) -> usize {
        1
    }

    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![0.0], vec![(self.n_states() - 1) as f64])
    }

    fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Drawn from the stationary distribution so sampled sums are unbiased
    /// estimates of the closed-form system from the first step on.
    fn start_state(&self, rng: &mut SimRng) -> Vec<f64> {
        let mut acc = 0.0;
        let cdf: Vec<f64> = self
            .stationary
            .iter()
            .map(|&v| {
                acc += v;
                acc
            })
            .collect();
        vec![self.sample_from(&cdf, rng) as f64]
    }

    fn step(&self, state: &[f64], rng: &mut SimRng) -> Step {
        let s = state[0] as usize;
        let next = self.sample_from(&self.cdf[s], rng);
        Step {
            next: vec![next as f64],
            reward: self.r[s],
            terminal: false,
        }
    }
}

/// Feature lookup for a finite state space: state `i` maps to row `i` of `X`.
#[derive(Debug, Clone)]
pub struct TabularFeatures {
    x: DMatrix<f64>,
}

impl TabularFeatures {
    pub fn new(x: DMatrix<f64>) -> Self {
        Self { x }
    }
}

impl<T: Real> FeatureMap<T> for TabularFeatures {
    fn dim(&self) -> usize {
        self.x.ncols()
    }

    fn features(&self, state: &[f64]) -> FeatureVector<T> {
        let i = (state[0].max(0.0) as usize).min(self.x.nrows() - 1);
        FeatureVector::Dense(DVector::from_fn(self.x.ncols(), |j, _| T::lit(self.x[(i, j)])))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sorted_svd;

    #[test]
    fn single_state() {
        let mdp = SyntheticMdp::new(
            DMatrix::from_element(1, 1, 1.0),
            DVector::from_element(1, 0.7),
            DMatrix::from_element(1, 1, 1.0),
            0.0,
            0.0,
        )
        .unwrap();
        let sys = mdp.true_system().unwrap();
        assert!((sys.a[(0, 0)] - 1.0).abs() < 1e-14);
        assert!((sys.b[0] - 0.7).abs() < 1e-14);
        assert!((sys.w_star[0] - 0.7).abs() < 1e-14);
    }

    #[test]
    fn zero_discount_collapses() {
        let mdp = SyntheticMdp::random(6, 3, 0.0, 0.0, 9).unwrap();
        let sys = mdp.true_system().unwrap();
        let d = DMatrix::from_diagonal(mdp.stationary());
        let x = mdp.feature_matrix();
        assert!((&sys.a - x.transpose() * &d * x).amax() < 1e-12);
        assert!((&sys.b - x.transpose() * &d * mdp.rewards()).amax() < 1e-12);
    }

    #[test]
    fn stationary_is_invariant() {
        let mdp = SyntheticMdp::random(7, 3, 0.9, 0.5, 1).unwrap();
        let pi = mdp.stationary();
        assert!((pi.transpose() * mdp.transition_matrix() - pi.transpose()).amax() < 1e-10);
        assert!((pi.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_rows() {
        let p = DMatrix::from_row_slice(2, 2, &[0.5, 0.6, 0.5, 0.5]);
        assert!(SyntheticMdp::new(p, DVector::zeros(2), DMatrix::identity(2, 2), 0.9, 0.0).is_err());
    }

    #[test]
    fn singular_trace_operator() {
        // gamma lambda P has eigenvalue 1 when gamma = lambda = 1
        let mdp = SyntheticMdp::random(3, 2, 1.0, 1.0, 0).unwrap();
        assert!(matches!(mdp.true_system(), Err(EnvError::SingularSystem)));
    }

    #[test]
    fn picard_construction_holds() {
        let mdp = SyntheticMdp::random_picard(10, 6, 0.9, 0.0, 2.0, 4).unwrap();
        let sys = mdp.true_system().unwrap();
        let svd = sorted_svd(sys.a.clone());
        for i in 0..6 {
            let proj = svd.u.column(i).dot(&sys.b).abs();
            assert!(proj <= svd.sigma[i].powi(2) * (1.0 + 1e-8), "index {i}");
        }
    }

    #[test]
    fn values_solve_bellman() {
        let mdp = SyntheticMdp::random(5, 2, 0.9, 0.0, 3).unwrap();
        let v = mdp.values().unwrap();
        let rhs = mdp.rewards() + mdp.transition_matrix() * &v * 0.9;
        assert!((v - rhs).amax() < 1e-12);
    }
}
