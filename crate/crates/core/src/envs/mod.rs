//! Transition sources: continuous simulators under fixed evaluation policies
//! and finite MDPs with closed-form linear systems.

mod mountain_car;
mod pendulum;
mod random_walk;
mod stream;
mod synthetic;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use mountain_car::{energy_pumping_policy, MountainCar, MountainCarConfig, MountainCarState};
pub use pendulum::{Pendulum, PendulumConfig, PendulumState};
pub use random_walk::{RandomWalk, RandomWalkConfig};
pub use stream::{read_stream_log, sample_stream, write_stream_log, StateStream, StateTransition, TransitionStream};
pub use synthetic::{SyntheticMdp, SyntheticMdpConfig, TabularFeatures, TrueSystem};

/// RNG used for every stochastic draw so streams are reproducible from a seed.
pub type SimRng = ChaCha8Rng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("invalid environment configuration: {0}")]
    InvalidConfig(String),
    #[error("(I - gamma lambda P) is numerically singular")]
    SingularSystem,
    #[error("malformed stream log: {0}")]
    MalformedLog(String),
}

/// Outcome of one environment step under the evaluation policy.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub next: Vec<f64>,
    pub reward: f64,
    pub terminal: bool,
}

/// An environment with its fixed evaluation policy folded in, so that a step
/// is a draw from the policy's transition kernel.
pub trait Simulator: Send + Sync {
    fn state_dim(&self) -> usize;

    /// Per-dimension state bounds used by the feature constructions.
    fn bounds(&self) -> (Vec<f64>, Vec<f64>);

    fn gamma(&self) -> f64;

    /// Episode start state.
    fn start_state(&self, rng: &mut SimRng) -> Vec<f64>;

    fn step(&self, state: &[f64], rng: &mut SimRng) -> Step;

    /// Episodes are cut (not terminated) after this many steps.
    fn max_episode_len(&self) -> Option<usize> {
        None
    }
}

/// Serializable selection of a simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvSpec {
    MountainCar(MountainCarConfig),
    Pendulum(PendulumConfig),
    Synthetic(SyntheticMdpConfig),
    RandomWalk(RandomWalkConfig),
}

impl EnvSpec {
    pub fn build(&self) -> Result<Box<dyn Simulator>, EnvError> {
        Ok(match self {
            EnvSpec::MountainCar(c) => Box::new(MountainCar::new(c.clone())?),
            EnvSpec::Pendulum(c) => Box::new(Pendulum::new(c.clone())?),
            EnvSpec::Synthetic(c) => Box::new(SyntheticMdp::from_config(c)?),
            EnvSpec::RandomWalk(c) => Box::new(RandomWalk::new(c.clone())?),
        })
    }
}
