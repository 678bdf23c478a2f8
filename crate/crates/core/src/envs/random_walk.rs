use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{EnvError, SimRng, Simulator, Step};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RandomWalkConfig {
    /// Dimension of the continuous state, in [0, 1]^dims.
    pub dims: usize,
    pub step_std: f64,
    pub reward_noise: f64,
    pub gamma: f64,
}

impl Default for RandomWalkConfig {
    fn default() -> Self {
        Self {
            dims: 2,
            step_std: 0.05,
            reward_noise: 0.1,
            gamma: 0.8,
        }
    }
}

/// Reflected Gaussian random walk on the unit box with a smooth reward
/// landscape. Combined with fine tile coding it gives large sparse problems
/// whose value function is smooth.
#[derive(Debug, Clone)]
pub struct RandomWalk {
    cfg: RandomWalkConfig,
    step: Normal<f64>,
}

impl RandomWalk {
    pub fn new(cfg: RandomWalkConfig) -> Result<Self, EnvError> {
        let mut bad = Vec::new();
        if cfg.dims == 0 {
            bad.push("dims must be positive".to_string());
        }
        if !(cfg.step_std > 0.0) {
            bad.push("step_std must be positive".to_string());
        }
        if !(cfg.reward_noise >= 0.0) {
            bad.push("reward_noise must be non-negative".to_string());
        }
        if !(0.0..1.0).contains(&cfg.gamma) {
            bad.push("gamma must lie in [0, 1)".to_string());
        }
        if !bad.is_empty() {
            return Err(EnvError::InvalidConfig(bad.join("; ")));
        }
        let step = Normal::new(0.0, cfg.step_std).map_err(|e| EnvError::InvalidConfig(e.to_string()))?;
        Ok(Self { cfg, step })
    }

    /// Expected reward at `s`.
    pub fn mean_reward(&self, s: &[f64]) -> f64 {
        s.iter()
            .enumerate()
            .map(|(i, &x)| (2.0 * PI * (i as f64 + 1.0) * x).sin())
            .sum::<f64>()
            / self.cfg.dims as f64
    }
}

fn reflect(x: f64) -> f64 {
    let y = x.rem_euclid(2.0);
    if y > 1.0 {
        2.0 - y
    } else {
        y
    }
}

impl Simulator for RandomWalk {
    fn state_dim(&self) -> usize {
        self.cfg.dims
    }

    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![0.0; self.cfg.dims], vec![1.0; self.cfg.dims])
    }

    fn gamma(&self) -> f64 {
        self.cfg.gamma
    }

    fn start_state(&self, rng: &mut SimRng) -> Vec<f64> {
        (0..self.cfg.dims).map(|_| rng.random::<f64>()).collect()
    }

    fn step(&self, state: &[f64], rng: &mut SimRng) -> Step {
        let next = state.iter().map(|&x| reflect(x + self.step.sample(rng))).collect();
        let noise = if self.cfg.reward_noise > 0.0 {
            self.cfg.reward_noise * rng.random_range(-1.0..1.0) * 3f64.sqrt()
        } else {
            0.0
        };
        Step {
            next,
            reward: self.mean_reward(state) + noise,
            terminal: false,
        }
    }
}
