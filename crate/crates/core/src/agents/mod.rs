//! Policy-evaluation learners sharing a transition-stream interface.
//!
//! All learners estimate the same linear system `A w = b`, where `A` is the
//! expectation of `z (x - gamma x')^T` and `b` the expectation of `z r`.

mod ilstd;
mod lstd;
mod td;
mod tlstd;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureVector;
use crate::linalg::{pinv_solve, truncated_solve};
use crate::scalar::Real;
use crate::svd::{SvdError, TruncatedSvd};

pub use ilstd::IlstdAgent;
pub use lstd::{LstdAgent, LstdSolver};
pub use td::TdAgent;
pub use tlstd::TlstdAgent;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("feature length mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid agent configuration: {0}")]
    InvalidConfig(String),
    #[error("Sherman-Morrison denominator {denominator:e} is numerically zero; sample skipped")]
    SingularUpdate { denominator: f64 },
    #[error(transparent)]
    Svd(#[from] SvdError),
}

/// One sampled transition in feature space.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition<T: Real> {
    pub x: FeatureVector<T>,
    pub x_next: FeatureVector<T>,
    pub reward: T,
    /// `gamma` mid-episode, `0` on a terminal transition.
    pub continue_discount: T,
}

impl<T: Real> Transition<T> {
    pub fn new(x: FeatureVector<T>, x_next: FeatureVector<T>, reward: T, continue_discount: T) -> Self {
        Self {
            x,
            x_next,
            reward,
            continue_discount,
        }
    }

    pub fn dim(&self) -> usize {
        self.x.dim()
    }

    /// `x - continue_discount * x_next`, sparse when both features are sparse.
    pub fn difference(&self) -> FeatureVector<T> {
        let cd = self.continue_discount;
        match (&self.x, &self.x_next) {
            (FeatureVector::Sparse { dim, .. }, FeatureVector::Sparse { .. }) => {
                let mut pairs: Vec<(usize, T)> = self.x.iter().collect();
                if cd != T::zero() {
                    pairs.extend(self.x_next.iter().map(|(i, v)| (i, -cd * v)));
                }
                FeatureVector::sparse(*dim, pairs)
            }
            _ => {
                let mut out = self.x.to_dense();
                self.x_next.add_scaled_to(&mut out, -cd);
                FeatureVector::Dense(out)
            }
        }
    }

    pub(crate) fn check_dim(&self, d: usize) -> Result<(), AgentError> {
        for got in [self.x.dim(), self.x_next.dim()] {
            if got != d {
                return Err(AgentError::DimensionMismatch { expected: d, got });
            }
        }
        Ok(())
    }
}

/// Accumulating eligibility trace `z <- gamma * lambda * z + x`.
///
/// The decay applied on a step is the previous transition's continuation
/// discount, so a terminal transition resets the trace on the following step.
/// The trace also resets whenever the new transition does not start where the
/// previous one ended (a truncated episode or a dropped sample).
#[derive(Debug, Clone)]
pub struct TraceState<T: Real> {
    z: DVector<T>,
    lambda: T,
    decay: T,
    last_next: Option<FeatureVector<T>>,
}

impl<T: Real> TraceState<T> {
    pub fn new(dim: usize, lambda: T) -> Self {
        Self {
            z: DVector::zeros(dim),
            lambda,
            decay: T::zero(),
            last_next: None,
        }
    }

    pub fn lambda(&self) -> T {
        self.lambda
    }

    pub fn trace(&self) -> &DVector<T> {
        &self.z
    }

    pub fn reset(&mut self) {
        self.z.fill(T::zero());
        self.decay = T::zero();
        self.last_next = None;
    }

    pub fn update(&mut self, tr: &Transition<T>) -> &DVector<T> {
        let continuing = self.last_next.as_ref() == Some(&tr.x);
        let factor = self.decay * self.lambda;
        if continuing && factor != T::zero() {
            self.z.scale_mut(factor);
        } else {
            self.z.fill(T::zero());
        }
        tr.x.add_scaled_to(&mut self.z, T::one());
        self.decay = tr.continue_discount;
        self.last_next = if self.lambda != T::zero() {
            Some(tr.x_next.clone())
        } else {
            None
        };
        &self.z
    }
}

/// Dense accumulated system `(A_t, b_t)` over `t` samples.
#[derive(Debug, Clone)]
pub struct LinearSystem<T: Real> {
    pub a: DMatrix<T>,
    pub b: DVector<T>,
    pub t: usize,
}

impl<T: Real> LinearSystem<T> {
    pub fn new(dim: usize) -> Self {
        Self {
            a: DMatrix::zeros(dim, dim),
            b: DVector::zeros(dim),
            t: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    /// `A <- (1 - beta) A + beta z d^T`, `b <- (1 - beta) b + beta z r`.
    pub fn push_average(&mut self, z: &DVector<T>, d: &FeatureVector<T>, reward: T, beta: T) {
        let keep = T::one() - beta;
        if keep != T::one() {
            self.a.scale_mut(keep);
            self.b.scale_mut(keep);
        }
        self.add_outer(z, d, beta);
        self.b.axpy(beta * reward, z, T::one());
        self.t += 1;
    }

    /// Running average with `beta_t = 1 / (t + 1)`.
    pub fn push_running_average(&mut self, z: &DVector<T>, d: &FeatureVector<T>, reward: T) {
        let beta = T::one() / T::lit((self.t + 1) as f64);
        self.push_average(z, d, reward, beta);
    }

    /// Un-normalized accumulation `A += z d^T`, `b += z r`.
    pub fn push_sum(&mut self, z: &DVector<T>, d: &FeatureVector<T>, reward: T) {
        self.add_outer(z, d, T::one());
        self.b.axpy(reward, z, T::one());
        self.t += 1;
    }

    fn add_outer(&mut self, z: &DVector<T>, d: &FeatureVector<T>, scale: T) {
        for (j, dj) in d.iter() {
            if dj != T::zero() {
                let mut col = self.a.column_mut(j);
                col.axpy(scale * dj, z, T::one());
            }
        }
    }

    /// Minimum-norm solution, ignoring singular values below `rel_tol * sigma_1`.
    pub fn solve_pinv(&self, rel_tol: T) -> DVector<T> {
        pinv_solve(&self.a, &self.b, rel_tol)
    }

    /// Solution of the rank-`r` truncated system.
    pub fn solve_truncated(&self, r: usize) -> DVector<T> {
        truncated_solve(&self.a, &self.b, r)
    }
}

/// Mixing weight schedule turning accumulated sums into weighted averages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BetaSchedule {
    /// `beta_t = 1 / (t + 1)`: an equally weighted running average.
    #[default]
    RunningAverage,
    /// Fixed `beta` in `(0, 1)`: exponential down-weighting of past samples.
    Constant(f64),
}

impl BetaSchedule {
    fn validate(&self) -> Result<(), AgentError> {
        match *self {
            BetaSchedule::Constant(b) if !(b > 0.0 && b < 1.0) => Err(AgentError::InvalidConfig(format!(
                "constant beta must lie in (0, 1), got {b}"
            ))),
            _ => Ok(()),
        }
    }
}

/// Step-size schedule for the stochastic learners.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSize {
    Constant(f64),
    /// `alpha_t = alpha0 (n0 + 1) / (n0 + t)` for `t = 1, 2, ...`
    Decaying { alpha0: f64, n0: f64 },
}

impl StepSize {
    pub fn at(&self, t: usize) -> f64 {
        match *self {
            StepSize::Constant(a) => a,
            StepSize::Decaying { alpha0, n0 } => alpha0 * (n0 + 1.0) / (n0 + t.max(1) as f64),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Tlstd,
    Lstd,
    Ilstd,
    Td,
}

impl Algorithm {
    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::Tlstd => "tlstd",
            Algorithm::Lstd => "lstd",
            Algorithm::Ilstd => "ilstd",
            Algorithm::Td => "td",
        }
    }
}

fn default_batch() -> usize {
    1
}
fn default_m() -> usize {
    1
}
fn default_delta() -> f64 {
    1e-3
}
fn default_cutoff() -> f64 {
    crate::svd::DEFAULT_REL_CUTOFF
}
fn default_solve_every() -> usize {
    1
}

/// Flat configuration record from which any learner can be built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub algorithm: Algorithm,
    /// Target rank `r` (t-LSTD).
    #[serde(default)]
    pub rank: Option<usize>,
    /// Mini-batch size `k` (t-LSTD).
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default)]
    pub beta: BetaSchedule,
    /// Step size (TD, iLSTD); with `n0` set it is the initial value of the decay.
    #[serde(default)]
    pub alpha0: Option<f64>,
    #[serde(default)]
    pub n0: Option<f64>,
    /// Coordinate updates per step (iLSTD).
    #[serde(default = "default_m")]
    pub m: usize,
    /// Ridge initialization of the LSTD inverse.
    #[serde(default = "default_delta")]
    pub delta_init: f64,
    #[serde(default)]
    pub lstd_solver: LstdSolver,
    /// Relative singular-value cutoff for the t-LSTD solve.
    #[serde(default = "default_cutoff")]
    pub rel_cutoff: f64,
    /// Recompute the solution every this many steps.
    #[serde(default = "default_solve_every")]
    pub solve_every: usize,
}

/// Field names accepted in config files and sweep grids.
pub const AGENT_FIELDS: &[&str] = &[
    "algorithm",
    "rank",
    "batch_size",
    "lambda",
    "beta",
    "alpha0",
    "n0",
    "m",
    "delta_init",
    "lstd_solver",
    "rel_cutoff",
    "solve_every",
];

impl AgentConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            rank: None,
            batch_size: 1,
            lambda: 0.0,
            beta: BetaSchedule::RunningAverage,
            alpha0: None,
            n0: None,
            m: 1,
            delta_init: default_delta(),
            lstd_solver: LstdSolver::ShermanMorrison,
            rel_cutoff: default_cutoff(),
            solve_every: 1,
        }
    }

    pub fn tlstd(rank: usize, batch_size: usize) -> Self {
        Self {
            rank: Some(rank),
            batch_size,
            ..Self::new(Algorithm::Tlstd)
        }
    }

    pub fn td(alpha: f64) -> Self {
        Self {
            alpha0: Some(alpha),
            ..Self::new(Algorithm::Td)
        }
    }

    pub fn ilstd(m: usize, alpha0: f64, n0: Option<f64>) -> Self {
        Self {
            m,
            alpha0: Some(alpha0),
            n0,
            ..Self::new(Algorithm::Ilstd)
        }
    }

    pub fn lstd() -> Self {
        Self::new(Algorithm::Lstd)
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn step_size(&self) -> Result<StepSize, AgentError> {
        let alpha0 = self
            .alpha0
            .ok_or_else(|| AgentError::InvalidConfig(format!("{} requires alpha0", self.algorithm.as_str())))?;
        if !(alpha0 > 0.0) {
            return Err(AgentError::InvalidConfig(format!("alpha0 must be positive, got {alpha0}")));
        }
        Ok(match self.n0 {
            None => StepSize::Constant(alpha0),
            Some(n0) if n0 >= 0.0 => StepSize::Decaying { alpha0, n0 },
            Some(n0) => return Err(AgentError::InvalidConfig(format!("n0 must be non-negative, got {n0}"))),
        })
    }

    /// Checks every field relevant to the chosen algorithm for dimension `dim`.
    pub fn validate(&self, dim: usize) -> Result<(), AgentError> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(AgentError::InvalidConfig(format!("lambda must lie in [0, 1], got {}", self.lambda)));
        }
        if self.solve_every == 0 {
            return Err(AgentError::InvalidConfig("solve_every must be at least 1".into()));
        }
        match self.algorithm {
            Algorithm::Tlstd => {
                let r = self
                    .rank
                    .ok_or_else(|| AgentError::InvalidConfig("tlstd requires rank".into()))?;
                if r < 1 || r > dim {
                    return Err(AgentError::InvalidConfig(format!("rank {r} must lie in [1, {dim}]")));
                }
                if self.batch_size == 0 {
                    return Err(AgentError::InvalidConfig("batch_size must be at least 1".into()));
                }
                if !(self.rel_cutoff >= 0.0) {
                    return Err(AgentError::InvalidConfig("rel_cutoff must be non-negative".into()));
                }
                self.beta.validate()?;
            }
            Algorithm::Lstd => {
                if !(self.delta_init >= 0.0) {
                    return Err(AgentError::InvalidConfig("delta_init must be non-negative".into()));
                }
                if self.lstd_solver == LstdSolver::ShermanMorrison && self.delta_init == 0.0 {
                    return Err(AgentError::InvalidConfig(
                        "Sherman-Morrison LSTD needs delta_init > 0".into(),
                    ));
                }
            }
            Algorithm::Ilstd => {
                if self.m == 0 {
                    return Err(AgentError::InvalidConfig("m must be at least 1".into()));
                }
                self.step_size()?;
            }
            Algorithm::Td => {
                self.step_size()?;
            }
        }
        Ok(())
    }

    pub fn build<T: Real>(&self, dim: usize) -> Result<Box<dyn Agent<T>>, AgentError> {
        self.validate(dim)?;
        Ok(match self.algorithm {
            Algorithm::Tlstd => Box::new(TlstdAgent::new(dim, self)?),
            Algorithm::Lstd => Box::new(LstdAgent::new(dim, self)?),
            Algorithm::Ilstd => Box::new(IlstdAgent::new(dim, self)?),
            Algorithm::Td => Box::new(TdAgent::new(dim, self)?),
        })
    }
}

/// A policy-evaluation learner consuming one transition at a time.
pub trait Agent<T: Real>: Send {
    fn algorithm(&self) -> Algorithm;

    fn dim(&self) -> usize;

    /// Number of transitions consumed.
    fn samples(&self) -> usize;

    /// Consumes `tr` and returns the current weights. Learners that solve a
    /// system may return the last solution when `solve_every > 1`.
    fn step(&mut self, tr: &Transition<T>) -> Result<&DVector<T>, AgentError>;

    /// Up-to-date weights, solving if the cached solution is stale.
    fn weights(&mut self) -> &DVector<T>;

    /// The maintained factorization, for learners that keep one.
    fn factorization(&self) -> Option<&TruncatedSvd<T>> {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureVector;
    use proptest::prelude::*;

    fn dense(v: &[f64]) -> FeatureVector<f64> {
        FeatureVector::Dense(DVector::from_vec(v.to_vec()))
    }

    proptest! {
        #[test]
        fn trace_matches_discounted_sum(
            xs in proptest::collection::vec(proptest::collection::vec(-1.0f64..1.0, 3), 1..20),
            gamma in 0.0f64..1.0,
            lambda in 0.0f64..1.0,
        ) {
            let mut trace = TraceState::new(3, lambda);
            for w in xs.windows(2) {
                trace.update(&Transition::new(dense(&w[0]), dense(&w[1]), 0.0, gamma));
            }
            let last = xs.last().unwrap();
            trace.update(&Transition::new(dense(last), dense(last), 0.0, gamma));
            let steps = xs.len();
            let mut expect = DVector::zeros(3);
            for (i, x) in xs.iter().enumerate() {
                let pow = (gamma * lambda).powi((steps - 1 - i) as i32);
                expect += DVector::from_vec(x.clone()) * pow;
            }
            prop_assert!((trace.trace() - expect).amax() <= 1e-10);
        }
    }

    #[test]
    fn trace_resets_after_terminal() {
        let mut trace = TraceState::new(2, 0.9);
        let a = dense(&[1.0, 0.0]);
        let b = dense(&[0.0, 1.0]);
        trace.update(&Transition::new(a.clone(), b.clone(), 0.0, 0.0));
        // next step starts where the previous ended, but the episode terminated
        let z = trace.update(&Transition::new(b.clone(), a.clone(), 0.0, 0.9)).clone();
        assert_eq!(z, b.to_dense());
        let z = trace.update(&Transition::new(a.clone(), b.clone(), 0.0, 0.9)).clone();
        assert!((z - DVector::from_vec(vec![1.0, 0.81])).amax() < 1e-15);
        // a transition that does not continue the previous one resets the trace
        let z = trace.update(&Transition::new(a.clone(), b, 0.0, 0.9)).clone();
        assert_eq!(z, a.to_dense());
    }

    #[test]
    fn sparse_difference_merges_indices() {
        let tr = Transition::new(
            FeatureVector::sparse(4, vec![(0, 1.0), (2, 1.0)]),
            FeatureVector::sparse(4, vec![(2, 1.0), (3, 1.0)]),
            0.0,
            0.5,
        );
        let d = tr.difference();
        assert!(d.is_sparse());
        assert_eq!(d.to_dense(), DVector::from_vec(vec![1.0, 0.0, 0.5, -0.5]));
    }

    #[test]
    fn running_average_system() {
        let mut sys = LinearSystem::<f64>::new(1);
        let z = DVector::from_vec(vec![1.0]);
        sys.push_running_average(&z, &dense(&[2.0]), 4.0);
        sys.push_running_average(&z, &dense(&[4.0]), 0.0);
        assert!((sys.a[(0, 0)] - 3.0).abs() < 1e-15);
        assert!((sys.b[0] - 2.0).abs() < 1e-15);
        assert_eq!(sys.t, 2);
    }

    #[test]
    fn step_size_decay() {
        let s = StepSize::Decaying { alpha0: 0.5, n0: 10.0 };
        assert_eq!(s.at(1), 0.5);
        assert!((s.at(12) - 0.5 * 11.0 / 22.0).abs() < 1e-15);
        assert_eq!(StepSize::Constant(0.1).at(1000), 0.1);
    }

    #[test]
    fn config_validation_lists_problems() {
        assert!(AgentConfig::tlstd(0, 1).validate(4).is_err());
        assert!(AgentConfig::tlstd(5, 1).validate(4).is_err());
        assert!(AgentConfig::tlstd(2, 0).validate(4).is_err());
        assert!(AgentConfig::new(Algorithm::Td).validate(4).is_err());
        assert!(AgentConfig::td(0.1).with_lambda(1.5).validate(4).is_err());
        let mut c = AgentConfig::tlstd(2, 1);
        c.beta = BetaSchedule::Constant(1.5);
        assert!(c.validate(4).is_err());
        assert!(AgentConfig::ilstd(0, 0.1, None).validate(4).is_err());
        assert!(AgentConfig::lstd().validate(4).is_ok());
    }

    #[test]
    fn config_round_trips_through_toml() {
        let mut c = AgentConfig::tlstd(50, 50);
        c.beta = BetaSchedule::Constant(0.01);
        let text = toml::to_string(&c).unwrap();
        let back: AgentConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, c);
        let parsed: AgentConfig = toml::from_str("algorithm = \"td\"\nalpha0 = 0.1\nlambda = 0.9\n").unwrap();
        assert_eq!(parsed.algorithm, Algorithm::Td);
        assert_eq!(parsed.solve_every, 1);
    }
}
