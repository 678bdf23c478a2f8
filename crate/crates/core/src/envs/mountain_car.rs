use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{EnvError, SimRng, Simulator, Step};

pub const POSITION_MIN: f64 = -1.2;
pub const POSITION_MAX: f64 = 0.5;
pub const VELOCITY_MAX: f64 = 0.07;
const FORCE: f64 = 0.001;
const GRAVITY: f64 = 0.0025;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MountainCarState {
    pub position: f64,
    pub velocity: f64,
}

impl MountainCarState {
    pub fn new(position: f64, velocity: f64) -> Self {
        Self { position, velocity }
    }

    /// Textbook dynamics. Returns the next state, the reward and whether the
    /// goal was reached.
    pub fn step(self, action: i8) -> (Self, f64, bool) {
        let a = f64::from(action.clamp(-1, 1));
        let mut v = (self.velocity + FORCE * a - GRAVITY * (3.0 * self.position).cos()).clamp(-VELOCITY_MAX, VELOCITY_MAX);
        let mut p = (self.position + v).clamp(POSITION_MIN, POSITION_MAX);
        if p <= POSITION_MIN && v < 0.0 {
            v = 0.0;
            p = POSITION_MIN;
        }
        let done = p >= POSITION_MAX;
        (Self { position: p, velocity: v }, if done { 0.0 } else { -1.0 }, done)
    }
}

/// Push in the direction of the current velocity; `+1` at rest.
pub fn energy_pumping_policy(s: &MountainCarState) -> i8 {
    if s.velocity < 0.0 {
        -1
    } else {
        1
    }
}

fn default_gamma() -> f64 {
    0.99
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MountainCarConfig {
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Draw start states uniformly over the whole state box instead of the
    /// textbook start region (position in [-0.6, -0.4], velocity 0).
    #[serde(default = "yes")]
    pub random_starts: bool,
    #[serde(default)]
    pub max_episode_len: Option<usize>,
}

fn yes() -> bool {
    true
}

impl Default for MountainCarConfig {
    fn default() -> Self {
        Self {
            gamma: default_gamma(),
            random_starts: true,
            max_episode_len: None,
        }
    }
}

/// Mountain Car under the energy-pumping policy.
#[derive(Debug, Clone)]
pub struct MountainCar {
    cfg: MountainCarConfig,
}

impl MountainCar {
    pub fn new(cfg: MountainCarConfig) -> Result<Self, EnvError> {
        if !(0.0..=1.0).contains(&cfg.gamma) {
            return Err(EnvError::InvalidConfig(format!("gamma must lie in [0, 1], got {}", cfg.gamma)));
        }
        Ok(Self { cfg })
    }
}

impl Simulator for MountainCar {
    fn state_dim(&self) -> usize {
        2
    }

    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![POSITION_MIN, -VELOCITY_MAX], vec![POSITION_MAX, VELOCITY_MAX])
    }

    fn gamma(&self) -> f64 {
        self.cfg.gamma
    }

    fn start_state(&self, rng: &mut SimRng) -> Vec<f64> {
        if self.cfg.random_starts {
            // the goal edge itself is excluded so every episode has a step
            vec![
                rng.random_range(POSITION_MIN..POSITION_MAX),
                rng.random_range(-VELOCITY_MAX..=VELOCITY_MAX),
            ]
        } else {
            vec![rng.random_range(-0.6..=-0.4), 0.0]
        }
    }

    fn step(&self, state: &[f64], _rng: &mut SimRng) -> Step {
        let s = MountainCarState::new(state[0], state[1]);
        let (n, reward, terminal) = s.step(energy_pumping_policy(&s));
        Step {
            next: vec![n.position, n.velocity],
            reward,
            terminal,
        }
    }

    fn max_episode_len(&self) -> Option<usize> {
        self.cfg.max_episode_len
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn dynamics_example() {
        let (n, r, done) = MountainCarState::new(-0.5, 0.0).step(1);
        let v = 0.001 - 0.0025 * (-1.5f64).cos();
        assert!((n.velocity - v).abs() < 1e-15);
        assert!((n.velocity - 0.000823).abs() < 1e-6);
        assert!((n.position - (-0.5 + v)).abs() < 1e-15);
        assert_eq!((r, done), (-1.0, false));
    }

    #[test]
    fn goal_is_terminal() {
        let (n, r, done) = MountainCarState::new(0.49, 0.05).step(1);
        assert!(done);
        assert_eq!(r, 0.0);
        assert_eq!(n.position, POSITION_MAX);
    }

    #[test]
    fn zero_gravity_point() {
        let p = -std::f64::consts::PI / 6.0;
        let (n, _, _) = MountainCarState::new(p, 0.02).step(0);
        assert!((n.velocity - 0.02).abs() < 1e-15);
    }

    #[test]
    fn left_wall_stops_the_car() {
        let (n, _, _) = MountainCarState::new(-1.19, -0.05).step(-1);
        assert_eq!(n.position, POSITION_MIN);
        assert_eq!(n.velocity, 0.0);
    }

    #[test]
    fn policy_signs() {
        assert_eq!(energy_pumping_policy(&MountainCarState::new(0.0, 0.01)), 1);
        assert_eq!(energy_pumping_policy(&MountainCarState::new(0.0, -0.01)), -1);
        assert_eq!(energy_pumping_policy(&MountainCarState::new(0.0, 0.0)), 1);
    }

    #[test]
    fn policy_reaches_goal_from_standard_starts() {
        let env = MountainCar::new(MountainCarConfig {
            random_starts: false,
            ..Default::default()
        })
        .unwrap();
        let mut rng = SimRng::seed_from_u64(0);
        for _ in 0..20 {
            let mut s = env.start_state(&mut rng);
            let mut steps = 0;
            loop {
                let st = env.step(&s, &mut rng);
                steps += 1;
                s = st.next;
                if st.terminal {
                    break;
                }
                assert!(steps < 1000);
            }
        }
    }
}
