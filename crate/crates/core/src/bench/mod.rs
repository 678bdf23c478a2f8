//! Experiment harness: config files in, CSV learning curves and spectra out.

mod cli;
mod config;
mod runner;

pub use cli::{main_with_args, Cli, Command, SeedList};
pub use config::{
    AgentEntry, CheckpointSchedule, ConfigError, EvaluationConfig, ExperimentConfig, ExperimentKind, RuntimeConfig,
    SpectrumConfig, SpectrumPoint, SweepPoint, MAX_SPECTRUM_DIM,
};
pub use runner::{
    default_horizon, empirical_system, mean_stderr, run_experiment, run_learning_curve, run_runtime_curve,
    run_spectrum_point, write_aggregate, BenchError, ExperimentOutput, Problem, RunOptions, RunOutput, SpectrumResult,
};
