use nalgebra::{DMatrix, DVector};

use super::{Agent, AgentConfig, AgentError, Algorithm, StepSize, TraceState, Transition};
use crate::scalar::Real;

/// iLSTD(lambda): dense sums `A_t`, `b_t` with greedy coordinate descent on the
/// residual `mu = b_t - A_t w`.
pub struct IlstdAgent<T: Real> {
    a: DMatrix<T>,
    b: DVector<T>,
    mu: DVector<T>,
    w: DVector<T>,
    trace: TraceState<T>,
    m: usize,
    alpha: StepSize,
    samples: usize,
}

impl<T: Real> IlstdAgent<T> {
    pub fn new(dim: usize, cfg: &AgentConfig) -> Result<Self, AgentError> {
        if cfg.algorithm != Algorithm::Ilstd {
            return Err(AgentError::InvalidConfig("not an ilstd configuration".into()));
        }
        cfg.validate(dim)?;
        Ok(Self {
            a: DMatrix::zeros(dim, dim),
            b: DVector::zeros(dim),
            mu: DVector::zeros(dim),
            w: DVector::zeros(dim),
            trace: TraceState::new(dim, T::lit(cfg.lambda)),
            m: cfg.m,
            alpha: cfg.step_size()?,
            samples: 0,
        })
    }

    /// Starts from an already accumulated system with `w = 0`.
    pub fn with_system(a: DMatrix<T>, b: DVector<T>, cfg: &AgentConfig) -> Result<Self, AgentError> {
        let n = b.len();
        if a.shape() != (n, n) {
            return Err(AgentError::DimensionMismatch {
                expected: n,
                got: a.nrows(),
            });
        }
        let mut agent = Self::new(n, cfg)?;
        agent.mu = b.clone();
        agent.a = a;
        agent.b = b;
        Ok(agent)
    }

    pub fn residual(&self) -> &DVector<T> {
        &self.mu
    }

    pub fn system(&self) -> (&DMatrix<T>, &DVector<T>) {
        (&self.a, &self.b)
    }

    fn descend(&mut self, alpha: T) {
        for _ in 0..self.m {
            let mut j = 0;
            let mut best = T::zero();
            for (i, v) in self.mu.iter().enumerate() {
                if v.abs() > best {
                    best = v.abs();
                    j = i;
                }
            }
            if best == T::zero() {
                break;
            }
            let delta = alpha * self.mu[j];
            self.w[j] += delta;
            self.mu.axpy(-delta, &self.a.column(j), T::one());
        }
    }
}

impl<T: Real> Agent<T> for IlstdAgent<T> {
    fn algorithm(&self) -> Algorithm {
        Algorithm::Ilstd
    }

    fn dim(&self) -> usize {
        self.w.len()
    }

    fn samples(&self) -> usize {
        self.samples
    }

    fn step(&mut self, tr: &Transition<T>) -> Result<&DVector<T>, AgentError> {
        tr.check_dim(self.dim())?;
        self.samples += 1;
        let z = self.trace.update(tr);
        let d = tr.difference();
        for (j, dj) in d.iter() {
            if dj != T::zero() {
                self.a.column_mut(j).axpy(dj, z, T::one());
            }
        }
        self.b.axpy(tr.reward, z, T::one());
        self.mu.axpy(tr.reward - d.dot(&self.w), z, T::one());
        let alpha = T::lit(self.alpha.at(self.samples));
        self.descend(alpha);
        Ok(&self.w)
    }

    fn weights(&mut self) -> &DVector<T> {
        &self.w
    }
}
