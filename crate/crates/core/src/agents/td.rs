use nalgebra::DVector;

use super::{Agent, AgentConfig, AgentError, Algorithm, StepSize, TraceState, Transition};
use crate::scalar::Real;

/// Linear TD(lambda) with accumulating traces.
pub struct TdAgent<T: Real> {
    w: DVector<T>,
    trace: TraceState<T>,
    alpha: StepSize,
    samples: usize,
}

impl<T: Real> TdAgent<T> {
    pub fn new(dim: usize, cfg: &AgentConfig) -> Result<Self, AgentError> {
        if cfg.algorithm != Algorithm::Td {
            return Err(AgentError::InvalidConfig("not a td configuration".into()));
        }
        cfg.validate(dim)?;
        Ok(Self {
            w: DVector::zeros(dim),
            trace: TraceState::new(dim, T::lit(cfg.lambda)),
            alpha: cfg.step_size()?,
            samples: 0,
        })
    }

    pub fn with_weights(mut self, w: DVector<T>) -> Self {
        assert_eq!(w.len(), self.w.len());
        self.w = w;
        self
    }
}

impl<T: Real> Agent<T> for TdAgent<T> {
    fn algorithm(&self) -> Algorithm {
        Algorithm::Td
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
        let delta = tr.reward + tr.continue_discount * tr.x_next.dot(&self.w) - tr.x.dot(&self.w);
        let alpha = T::lit(self.alpha.at(self.samples));
        let z = self.trace.update(tr);
        if delta != T::zero() {
            self.w.axpy(alpha * delta, z, T::one());
        }
        Ok(&self.w)
    }

    fn weights(&mut self) -> &DVector<T> {
        &self.w
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureVector;

    #[test]
    fn single_step_example() {
        let mut agent = TdAgent::<f64>::new(3, &AgentConfig::td(0.5)).unwrap();
        let x = FeatureVector::sparse(3, vec![(0, 1.0)]);
        let w = agent.step(&Transition::new(x, FeatureVector::zeros(3), 1.0, 0.0)).unwrap();
        assert_eq!(w, &DVector::from_vec(vec![0.5, 0.0, 0.0]));
    }

    #[test]
    fn zero_error_is_fixed_point() {
        // w = (2, 1): x = e0, x' = e1, r = 1, gamma = 1 gives delta = 1 + 1 - 2 = 0
        let w0 = DVector::from_vec(vec![2.0, 1.0]);
        let mut agent = TdAgent::<f64>::new(2, &AgentConfig::td(0.3).with_lambda(0.9))
            .unwrap()
            .with_weights(w0.clone());
        let e0 = FeatureVector::sparse(2, vec![(0, 1.0)]);
        let e1 = FeatureVector::sparse(2, vec![(1, 1.0)]);
        for _ in 0..10 {
            assert_eq!(agent.step(&Transition::new(e0.clone(), e1.clone(), 1.0, 1.0)).unwrap(), &w0);
        }
    }
}
