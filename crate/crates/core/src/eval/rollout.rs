use rand::SeedableRng;
use rayon::prelude::*;

use nalgebra::DVector;

use crate::envs::{SimRng, Simulator};
use crate::features::FeatureMap;
use crate::scalar::Real;

/// Monte-Carlo state values with their standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutValues {
    pub values: Vec<f64>,
    pub std_errors: Vec<f64>,
}

/// Cell centers of a uniform grid with `per_dim` points per dimension,
/// first dimension varying slowest.
pub fn grid_states(lows: &[f64], highs: &[f64], per_dim: usize) -> Vec<Vec<f64>> {
    let dims = lows.len();
    let total = per_dim.pow(dims as u32);
    (0..total)
        .map(|mut k| {
            let mut s = vec![0.0; dims];
            for d in (0..dims).rev() {
                let i = k % per_dim;
                k /= per_dim;
                s[d] = lows[d] + (highs[d] - lows[d]) * (i as f64 + 0.5) / per_dim as f64;
            }
            s
        })
        .collect()
}

/// Discounted return of `n_rollouts` truncated rollouts from each start
/// state under the simulator's policy. Rollouts stop at a terminal step or
/// after `horizon` steps. Each state has its own RNG derived from `seed`, so
/// the result does not depend on thread scheduling.
pub fn rollout_values(sim: &dyn Simulator, states: &[Vec<f64>], n_rollouts: usize, horizon: usize, seed: u64) -> RolloutValues {
    let gamma = sim.gamma();
    let per_state: Vec<(f64, f64)> = states
        .par_iter()
        .enumerate()
        .map(|(k, s0)| {
            let mut rng = SimRng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let returns: Vec<f64> = (0..n_rollouts)
                .map(|_| {
                    let mut s = s0.clone();
                    let mut g = 0.0;
                    let mut disc = 1.0;
                    for _ in 0..horizon {
                        let st = sim.step(&s, &mut rng);
                        g += disc * st.reward;
                        disc *= gamma;
                        if st.terminal {
                            break;
                        }
                        s = st.next;
                    }
                    g
                })
                .collect();
            let n = returns.len() as f64;
            if returns.is_empty() {
                return (0.0, 0.0);
            }
            let mean = returns.iter().sum::<f64>() / n;
            let se = if returns.len() > 1 {
                let var = returns.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / (n - 1.0);
                (var / n).sqrt()
            } else {
                0.0
            };
            (mean, se)
        })
        .collect();
    RolloutValues {
        values: per_state.iter().map(|p| p.0).collect(),
        std_errors: per_state.iter().map(|p| p.1).collect(),
    }
}

/// Root mean squared error of the linear value estimate over `states`.
pub fn rmse<T: Real>(w: &DVector<T>, features: &dyn FeatureMap<T>, states: &[Vec<f64>], values: &[f64]) -> f64 {
    assert_eq!(states.len(), values.len());
    if states.is_empty() {
        return 0.0;
    }
    let sse: f64 = states
        .iter()
        .zip(values)
        .map(|(s, v)| (features.features(s).dot(w).as_f64() - v).powi(2))
        .sum();
    (sse / states.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{Step, SyntheticMdp};
    use crate::features::{FeatureVector, RbfGrid, RbfGridConfig};
    use nalgebra::DMatrix;
    use rand::Rng;

    struct Constant;

    impl Simulator for Constant {
        fn state_dim(&self) -> usize {
            1
        }
        fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
            (vec![0.0], vec![1.0])
        }
        fn gamma(&self) -> f64 {
            0.5
        }
        fn start_state(&self, _: &mut SimRng) -> Vec<f64> {
            vec![0.0]
        }
        fn step(&self, s: &[f64], _: &mut SimRng) -> Step {
            Step {
                next: s.to_vec(),
                reward: 1.0,
                terminal: false,
            }
        }
    }

    #[test]
    fn geometric_series() {
        let v = rollout_values(&Constant, &[vec![0.0], vec![0.5]], 3, 60, 0);
        for x in v.values {
            assert!((x - 2.0).abs() < 1e-12);
        }
        assert_eq!(v.std_errors, vec![0.0, 0.0]);
    }

    #[test]
    fn grid_layout() {
        let g = grid_states(&[0.0, 10.0], &[1.0, 20.0], 2);
        assert_eq!(g, vec![vec![0.25, 12.5], vec![0.25, 17.5], vec![0.75, 12.5], vec![0.75, 17.5]]);
    }

    #[test]
    fn synthetic_values_within_three_sigma() {
        let mdp = SyntheticMdp::random(5, 2, 0.8, 0.0, 6).unwrap();
        let states: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64]).collect();
        let est = rollout_values(&mdp, &states, 4000, 60, 1);
        let truth = mdp.values().unwrap();
        for i in 0..5 {
            assert!((est.values[i] - truth[i]).abs() <= 3.0 * est.std_errors[i] + 1e-5, "state {i}");
        }
    }

    #[test]
    fn standard_error_shrinks_with_rollouts() {
        let mdp = SyntheticMdp::random(5, 2, 0.8, 0.0, 6).unwrap();
        let states = vec![vec![0.0]];
        let a = rollout_values(&mdp, &states, 2000, 60, 3).std_errors[0];
        let b = rollout_values(&mdp, &states, 4000, 60, 4).std_errors[0];
        let ratio = b / a;
        assert!((ratio - 0.5f64.sqrt()).abs() < 0.1, "{ratio}");
    }

    #[test]
    fn rmse_cases() {
        let rbf = RbfGrid::new(RbfGridConfig::new(vec![0.0], vec![1.0], 5, 0.2)).unwrap();
        let states: Vec<Vec<f64>> = (0..7).map(|i| vec![i as f64 / 6.0]).collect();
        let w = DVector::from_vec(vec![0.3, -1.0, 2.0, 0.5, 0.0]);
        let exact: Vec<f64> = states.iter().map(|s| FeatureMap::<f64>::features(&rbf, s).dot(&w)).collect();
        assert!(rmse(&w, &rbf, &states, &exact) < 1e-15);
        let shifted: Vec<f64> = exact.iter().map(|v| v + 0.7).collect();
        assert!((rmse(&w, &rbf, &states, &shifted) - 0.7).abs() < 1e-12);

        let mut rng = SimRng::seed_from_u64(2);
        let noisy: Vec<f64> = exact.iter().map(|v| v + rng.random_range(-1.0..1.0)).collect();
        let x = DMatrix::from_fn(7, 5, |i, j| match FeatureMap::<f64>::features(&rbf, &states[i]) {
            FeatureVector::Dense(v) => v[j],
            other => other.to_dense()[j],
        });
        let resid = x * &w - DVector::from_vec(noisy.clone());
        let brute = (resid.norm_squared() / 7.0).sqrt();
        assert!((rmse(&w, &rbf, &states, &noisy) - brute).abs() < 1e-12);
    }
}
