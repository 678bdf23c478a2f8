use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Agent, AgentConfig, AgentError, Algorithm, LinearSystem, TraceState, Transition};
use crate::linalg::pinv_solve;
use crate::scalar::Real;

/// Denominators at or below this magnitude reject a Sherman-Morrison update.
pub const SINGULAR_DENOMINATOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LstdSolver {
    /// Maintain `(delta I + A)^-1` by rank-one inverse updates.
    #[default]
    ShermanMorrison,
    /// Accumulate `A`, `b` and solve `(delta I + A) w = b` by pseudo-inverse.
    Dense,
}

enum State<T: Real> {
    Inverse { inv: DMatrix<T>, b: DVector<T> },
    Dense { sys: LinearSystem<T>, delta: T },
}

/// Exact LSTD(lambda) over un-normalized sums.
pub struct LstdAgent<T: Real> {
    state: State<T>,
    trace: TraceState<T>,
    w: DVector<T>,
    solve_every: usize,
    samples: usize,
    skipped: usize,
    stale: bool,
}

impl<T: Real> LstdAgent<T> {
    pub fn new(dim: usize, cfg: &AgentConfig) -> Result<Self, AgentError> {
        if cfg.algorithm != Algorithm::Lstd {
            return Err(AgentError::InvalidConfig("not an lstd configuration".into()));
        }
        cfg.validate(dim)?;
        let delta = T::lit(cfg.delta_init);
        let state = match cfg.lstd_solver {
            LstdSolver::ShermanMorrison => State::Inverse {
                inv: DMatrix::identity(dim, dim) / delta,
                b: DVector::zeros(dim),
            },
            LstdSolver::Dense => State::Dense {
                sys: LinearSystem::new(dim),
                delta,
            },
        };
        Ok(Self {
            state,
            trace: TraceState::new(dim, T::lit(cfg.lambda)),
            w: DVector::zeros(dim),
            solve_every: cfg.solve_every,
            samples: 0,
            skipped: 0,
            stale: false,
        })
    }

    /// Samples rejected because the inverse update was numerically singular.
    pub fn skipped(&self) -> usize {
        self.skipped
    }

    fn solve(&mut self) {
        self.w = match &self.state {
            State::Inverse { inv, b } => inv * b,
            State::Dense { sys, delta } => {
                let mut a = sys.a.clone();
                for i in 0..a.nrows() {
                    a[(i, i)] += *delta;
                }
                pinv_solve(&a, &sys.b, T::lit(1e-13))
            }
        };
        self.stale = false;
    }

    fn absorb(&mut self, tr: &Transition<T>) -> Result<(), AgentError> {
        let z = self.trace.update(tr);
        let d = tr.difference();
        match &mut self.state {
            State::Inverse { inv, b } => {
                let inv_z = &*inv * z;
                // d^T inv, touching only the nonzero rows of d
                let mut d_inv = DVector::zeros(inv.ncols());
                for (i, v) in d.iter() {
                    d_inv.axpy(v, &inv.row(i).transpose(), T::one());
                }
                let denom = T::one() + d.dot(&inv_z);
                if denom.abs() <= T::lit(SINGULAR_DENOMINATOR) {
                    return Err(AgentError::SingularUpdate {
                        denominator: denom.as_f64(),
                    });
                }
                inv.ger(-T::one() / denom, &inv_z, &d_inv, T::one());
                b.axpy(tr.reward, z, T::one());
            }
            State::Dense { sys, .. } => sys.push_sum(z, &d, tr.reward),
        }
        Ok(())
    }
}

impl<T: Real> Agent<T> for LstdAgent<T> {
    fn algorithm(&self) -> Algorithm {
        Algorithm::Lstd
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
        if let Err(e) = self.absorb(tr) {
            self.skipped += 1;
            return Err(e);
        }
        self.stale = true;
        if self.samples.is_multiple_of(self.solve_every) {
            self.solve();
        }
        Ok(&self.w)
    }

    fn weights(&mut self) -> &DVector<T> {
        if self.stale {
            self.solve();
        }
        &self.w
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar(v: f64) -> FeatureVector<f64> {
        FeatureVector::Dense(DVector::from_element(1, v))
    }

    #[test]
    fn scalar_with_ridge() {
        let mut cfg = AgentConfig::lstd();
        cfg.delta_init = 1.0;
        let mut agent = LstdAgent::<f64>::new(1, &cfg).unwrap();
        let w = agent.step(&Transition::new(scalar(1.0), scalar(0.0), 1.0, 0.0)).unwrap();
        assert!((w[0] - 0.5).abs() < 1e-15);

        cfg.delta_init = 1e-9;
        let mut agent = LstdAgent::<f64>::new(1, &cfg).unwrap();
        let w = agent.step(&Transition::new(scalar(1.0), scalar(0.0), 1.0, 0.0)).unwrap();
        assert!((w[0] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn empty_stream_gives_zero() {
        let mut agent = LstdAgent::<f64>::new(4, &AgentConfig::lstd()).unwrap();
        assert_eq!(agent.weights(), &DVector::zeros(4));
    }

    #[test]
    fn sherman_morrison_matches_ridge_solve() {
        let d = 6;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut cfg = AgentConfig::lstd().with_lambda(0.7);
        cfg.delta_init = 0.5;
        let mut agent = LstdAgent::<f64>::new(d, &cfg).unwrap();
        let mut trace = TraceState::new(d, 0.7);
        let mut a = DMatrix::identity(d, d) * 0.5;
        let mut b = DVector::zeros(d);
        let mut x = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
        for _ in 0..100 {
            let xn = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
            let tr = Transition::new(FeatureVector::Dense(x.clone()), FeatureVector::Dense(xn.clone()), rng.random_range(-1.0..1.0), 0.9);
            let z = trace.update(&tr).clone();
            a += &z * tr.difference().to_dense().transpose();
            b += &z * tr.reward;
            let w = agent.step(&tr).unwrap().clone();
            let expect = a.clone().lu().solve(&b).unwrap();
            assert!((&w - &expect).norm() <= 1e-8 * expect.norm().max(1.0));
            x = xn;
        }
    }

    #[test]
    fn singular_update_is_skipped() {
        let mut cfg = AgentConfig::lstd();
        cfg.delta_init = 1.0;
        let mut agent = LstdAgent::<f64>::new(1, &cfg).unwrap();
        // 1 + d^T inv z = 1 - 1 = 0
        let tr = Transition::new(scalar(1.0), scalar(2.0), 1.0, 1.0);
        assert!(matches!(agent.step(&tr), Err(AgentError::SingularUpdate { .. })));
        assert_eq!(agent.skipped(), 1);
        assert_eq!(agent.weights(), &DVector::zeros(1));
    }

    #[test]
    fn dense_mode_agrees_with_sherman_morrison() {
        let d = 4;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut sm = LstdAgent::<f64>::new(d, &AgentConfig::lstd()).unwrap();
        let mut cfg = AgentConfig::lstd();
        cfg.lstd_solver = LstdSolver::Dense;
        let mut dense = LstdAgent::<f64>::new(d, &cfg).unwrap();
        for _ in 0..50 {
            let tr = Transition::new(
                FeatureVector::Dense(DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0))),
                FeatureVector::Dense(DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0))),
                1.0,
                0.5,
            );
            let a = sm.step(&tr).unwrap().clone();
            let b = dense.step(&tr).unwrap().clone();
            assert!((&a - &b).norm() <= 1e-8 * b.norm());
        }
    }
}
