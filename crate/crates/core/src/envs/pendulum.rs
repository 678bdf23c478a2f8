use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{EnvError, SimRng, Simulator, Step};

/// Angle measured from upright, wrapped to `[-pi, pi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendulumState {
    pub angle: f64,
    pub velocity: f64,
}

fn wrap(angle: f64) -> f64 {
    (angle + PI).rem_euclid(2.0 * PI) - PI
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PendulumConfig {
    pub gamma: f64,
    /// `g / l`.
    pub gravity: f64,
    pub damping: f64,
    pub max_torque: f64,
    pub max_speed: f64,
    pub dt: f64,
    /// RK4 substeps per environment step.
    pub substeps: usize,
    pub episode_len: usize,
}

impl Default for PendulumConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            gravity: 10.0,
            damping: 0.05,
            max_torque: 2.0,
            max_speed: 8.0,
            dt: 0.05,
            substeps: 1,
            episode_len: 200,
        }
    }
}

impl PendulumState {
    pub fn new(angle: f64, velocity: f64) -> Self {
        Self { angle, velocity }
    }

    /// Total energy per unit inertia, `0.5 w^2 + (g/l) cos(angle)`; the
    /// upright rest state has energy `g/l`.
    pub fn energy(&self, gravity: f64) -> f64 {
        0.5 * self.velocity * self.velocity + gravity * self.angle.cos()
    }

    /// Integrates `angle'' = (g/l) sin(angle) - damping * angle' + torque`.
    pub fn step(self, torque: f64, cfg: &PendulumConfig) -> (Self, f64) {
        let f = |th: f64, w: f64| (w, cfg.gravity * th.sin() - cfg.damping * w + torque);
        let h = cfg.dt / cfg.substeps.max(1) as f64;
        let (mut th, mut w) = (self.angle, self.velocity);
        for _ in 0..cfg.substeps.max(1) {
            let k1 = f(th, w);
            let k2 = f(th + 0.5 * h * k1.0, w + 0.5 * h * k1.1);
            let k3 = f(th + 0.5 * h * k2.0, w + 0.5 * h * k2.1);
            let k4 = f(th + h * k3.0, w + h * k3.1);
            th += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
            w += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        }
        let next = Self {
            angle: wrap(th),
            velocity: w.clamp(-cfg.max_speed, cfg.max_speed),
        };
        (next, next.angle.cos())
    }
}

/// Pendulum under an energy-pumping torque policy: full torque along the
/// velocity (positive at rest) while the energy is below the upright level,
/// no torque above it.
#[derive(Debug, Clone)]
pub struct Pendulum {
    cfg: PendulumConfig,
}

impl Pendulum {
    pub fn new(cfg: PendulumConfig) -> Result<Self, EnvError> {
        let mut bad = Vec::new();
        if !(0.0..=1.0).contains(&cfg.gamma) {
            bad.push("gamma must lie in [0, 1]");
        }
        if !(cfg.dt > 0.0) {
            bad.push("dt must be positive");
        }
        if !(cfg.max_speed > 0.0) {
            bad.push("max_speed must be positive");
        }
        if cfg.episode_len == 0 {
            bad.push("episode_len must be positive");
        }
        if !bad.is_empty() {
            return Err(EnvError::InvalidConfig(bad.join("; ")));
        }
        Ok(Self { cfg })
    }

    pub fn config(&self) -> &PendulumConfig {
        &self.cfg
    }

    pub fn policy(&self, s: &PendulumState) -> f64 {
        if s.energy(self.cfg.gravity) >= self.cfg.gravity {
            0.0
        } else if s.velocity < 0.0 {
            -self.cfg.max_torque
        } else {
            self.cfg.max_torque
        }
    }
}

impl Simulator for Pendulum {
    fn state_dim(&self) -> usize {
        2
    }

    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![-PI, -self.cfg.max_speed], vec![PI, self.cfg.max_speed])
    }

    fn gamma(&self) -> f64 {
        self.cfg.gamma
    }

    fn start_state(&self, rng: &mut SimRng) -> Vec<f64> {
        vec![
            rng.random_range(-PI..PI),
            rng.random_range(-self.cfg.max_speed..=self.cfg.max_speed),
        ]
    }

    fn step(&self, state: &[f64], _rng: &mut SimRng) -> Step {
        let s = PendulumState::new(state[0], state[1]);
        let (n, reward) = s.step(self.policy(&s), &self.cfg);
        Step {
            next: vec![n.angle, n.velocity],
            reward,
            terminal: false,
        }
    }

    fn max_episode_len(&self) -> Option<usize> {
        Some(self.cfg.episode_len)
    }
}
