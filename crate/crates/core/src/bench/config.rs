use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{AgentConfig, AGENT_FIELDS};
use crate::envs::EnvSpec;
use crate::features::FeatureSpec;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config:\n  - {}", .0.join("\n  - "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// RMSE at sample-count checkpoints.
    #[default]
    Learning,
    /// RMSE against learner wall-clock time.
    Runtime,
    /// Singular spectrum of the empirical system per feature configuration.
    Spectrum,
}

/// Sample counts at which learning curves are recorded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CheckpointSchedule {
    At(Vec<usize>),
    /// `0, first, ceil(first * factor), ...` up to the budget, which is always included.
    Geometric { first: usize, factor: f64 },
}

impl Default for CheckpointSchedule {
    fn default() -> Self {
        CheckpointSchedule::Geometric { first: 10, factor: 1.5 }
    }
}

impl CheckpointSchedule {
    pub fn points(&self, budget: usize) -> Vec<usize> {
        match self {
            CheckpointSchedule::At(v) => v.iter().copied().filter(|&s| s <= budget).collect(),
            CheckpointSchedule::Geometric { first, factor } => {
                let mut out = vec![0];
                let mut next = (*first).max(1) as f64;
                while (next as usize) < budget {
                    let s = next as usize;
                    if s > *out.last().unwrap() {
                        out.push(s);
                    }
                    next = (next * factor).ceil();
                }
                if budget > 0 {
                    out.push(budget);
                }
                out
            }
        }
    }
}

/// How the ground-truth values are obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluationConfig {
    /// Evaluation grid points per state dimension (continuous environments).
    pub grid_per_dim: usize,
    pub rollouts: usize,
    /// Rollout length; `None` picks the smallest with `gamma^h < 1e-4`.
    pub horizon: Option<usize>,
    pub seed: u64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            grid_per_dim: 20,
            rollouts: 1,
            horizon: None,
            seed: 20_240_101,
        }
    }
}

/// One learner family together with its sweep grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "toml::Table")]
pub struct AgentEntry {
    #[serde(flatten)]
    pub base: AgentConfig,
    /// Field name to list of values; the Cartesian product is run.
    #[serde(default)]
    pub sweep: BTreeMap<String, Vec<toml::Value>>,
    /// Optional per-entry sample budget (defaults to the experiment's).
    #[serde(default)]
    pub samples: Option<usize>,
}

// serde ignores deny_unknown_fields on flattened structs, so the agent
// fields are split off by hand and parsed strictly.
impl TryFrom<toml::Table> for AgentEntry {
    type Error = String;

    fn try_from(mut t: toml::Table) -> Result<Self, String> {
        let sweep = match t.remove("sweep") {
            Some(v) => v.try_into().map_err(|e: toml::de::Error| format!("sweep: {}", e.message()))?,
            None => BTreeMap::new(),
        };
        let samples = match t.remove("samples") {
            Some(v) => Some(v.try_into().map_err(|e: toml::de::Error| format!("samples: {}", e.message()))?),
            None => None,
        };
        let base = toml::Value::Table(t)
            .try_into()
            .map_err(|e: toml::de::Error| e.message().to_string())?;
        Ok(Self { base, sweep, samples })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeConfig {
    /// Learner time budget in seconds.
    pub time_budget: f64,
    /// Checkpoint spacing in learner seconds.
    #[serde(default = "default_interval")]
    pub interval: f64,
    /// Samples per second offered by the stream; unlimited when absent.
    #[serde(default)]
    pub rate_cap: Option<f64>,
}

fn default_interval() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumPoint {
    pub label: String,
    pub features: FeatureSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumConfig {
    pub episodes: usize,
    /// Steps per episode; required for simulators without terminal states.
    #[serde(default)]
    pub episode_len: Option<usize>,
    #[serde(default = "default_mass")]
    pub mass_fraction: f64,
    #[serde(default)]
    pub lambda: f64,
    pub points: Vec<SpectrumPoint>,
}

fn default_mass() -> f64 {
    0.95
}

/// Largest feature dimension accepted for a dense spectrum.
pub const MAX_SPECTRUM_DIM: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub kind: ExperimentKind,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Sample budget per run (learning experiments; caps runtime experiments).
    #[serde(default)]
    pub samples: usize,
    #[serde(default)]
    pub checkpoints: CheckpointSchedule,
    /// Record cumulative learner seconds in learning curves. Off by default so
    /// learning outputs are bitwise reproducible.
    #[serde(default)]
    pub record_time: bool,
    /// Marks reduced-budget presets in the aggregate file header.
    #[serde(default)]
    pub desk_scale: bool,
    #[serde(default)]
    pub out: Option<PathBuf>,
    pub env: EnvSpec,
    /// Required except for synthetic environments, which default to their own features.
    #[serde(default)]
    pub features: Option<FeatureSpec>,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    #[serde(default)]
    pub agents: Vec<AgentEntry>,
    #[serde(default)]
    pub runtime: Option<RuntimeConfig>,
    #[serde(default)]
    pub spectrum: Option<SpectrumConfig>,
}

fn default_seeds() -> Vec<u64> {
    (1..=30).collect()
}

/// One concrete learner configuration produced by expanding a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub label: String,
    pub agent: AgentConfig,
    pub samples: usize,
}

fn value_label(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        toml::Value::Table(t) => t
            .iter()
            .map(|(k, v)| format!("{k}-{}", value_label(v)))
            .collect::<Vec<_>>()
            .join("-"),
        other => other.to_string(),
    }
}

impl AgentEntry {
    pub fn expand(&self, default_samples: usize) -> Result<Vec<SweepPoint>, String> {
        let base = toml::Value::try_from(&self.base).map_err(|e| e.to_string())?;
        let mut points = vec![(base, self.base.algorithm.as_str().to_string())];
        for (key, values) in &self.sweep {
            if !AGENT_FIELDS.contains(&key.as_str()) || key == "algorithm" {
                return Err(format!("`{key}` is not a sweepable agent field"));
            }
            if values.is_empty() {
                return Err(format!("sweep over `{key}` has no values"));
            }
            let mut next = Vec::with_capacity(points.len() * values.len());
            for (table, label) in &points {
                for v in values {
                    let mut t = table.clone();
                    t.as_table_mut()
                        .expect("agent config serializes to a table")
                        .insert(key.clone(), v.clone());
                    next.push((t, format!("{label}_{key}={}", value_label(v))));
                }
            }
            points = next;
        }
        points
            .into_iter()
            .map(|(t, label)| {
                let agent: AgentConfig = t.try_into().map_err(|e: toml::de::Error| format!("{label}: {}", e.message()))?;
                Ok(SweepPoint {
                    label,
                    agent,
                    samples: self.samples.unwrap_or(default_samples),
                })
            })
            .collect()
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn sweep_points(&self) -> Result<Vec<SweepPoint>, String> {
        let mut out = Vec::new();
        for entry in &self.agents {
            out.extend(entry.expand(self.samples)?);
        }
        Ok(out)
    }

    /// Feature dimension, building the environment and features to find it.
    pub fn feature_dim(&self) -> Result<usize, String> {
        match (&self.features, &self.env) {
            (Some(f), _) => f.build::<f64>().map(|m| m.dim()).map_err(|e| e.to_string()),
            (None, EnvSpec::Synthetic(c)) => Ok(c.n_features),
            (None, _) => Err("features: required for this environment".into()),
        }
    }

    /// Collects every problem instead of stopping at the first.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errs = Vec::new();
        if self.name.trim().is_empty() {
            errs.push("name: must not be empty".to_string());
        }
        if self.seeds.is_empty() {
            errs.push("seeds: at least one seed required".to_string());
        }
        let mut seen = std::collections::HashSet::new();
        if self.seeds.iter().any(|s| !seen.insert(*s)) {
            errs.push("seeds: duplicates".to_string());
        }
        if let Err(e) = self.env.build() {
            errs.push(format!("env: {e}"));
        }
        let dim = match self.feature_dim() {
            Ok(d) => Some(d),
            Err(e) => {
                if self.kind != ExperimentKind::Spectrum {
                    errs.push(e);
                }
                None
            }
        };
        if let CheckpointSchedule::At(v) = &self.checkpoints {
            if v.windows(2).any(|w| w[0] >= w[1]) {
                errs.push("checkpoints: must be strictly increasing".to_string());
            }
        }
        if let CheckpointSchedule::Geometric { factor, .. } = &self.checkpoints {
            if !(*factor > 1.0) {
                errs.push("checkpoints.factor: must exceed 1".to_string());
            }
        }
        if self.evaluation.grid_per_dim == 0 {
            errs.push("evaluation.grid_per_dim: must be positive".to_string());
        }
        if self.evaluation.rollouts == 0 {
            errs.push("evaluation.rollouts: must be positive".to_string());
        }
        match self.kind {
            ExperimentKind::Learning | ExperimentKind::Runtime => {
                if self.agents.is_empty() {
                    errs.push("agents: at least one agent required".to_string());
                }
                match self.sweep_points() {
                    Ok(points) => {
                        let mut labels = std::collections::HashSet::new();
                        for p in &points {
                            if !labels.insert(p.label.clone()) {
                                errs.push(format!("agents: duplicate run label `{}`", p.label));
                            }
                            if let Some(d) = dim {
                                if let Err(e) = p.agent.validate(d) {
                                    errs.push(format!("agents.{}: {e}", p.label));
                                }
                            }
                        }
                    }
                    Err(e) => errs.push(format!("agents.sweep: {e}")),
                }
                if self.kind == ExperimentKind::Runtime {
                    match &self.runtime {
                        None => errs.push("runtime: section required for runtime experiments".to_string()),
                        Some(rt) => {
                            if !(rt.time_budget >= 0.0) {
                                errs.push("runtime.time_budget: must be non-negative".to_string());
                            }
                            if !(rt.interval > 0.0) {
                                errs.push("runtime.interval: must be positive".to_string());
                            }
                            if let Some(c) = rt.rate_cap {
                                if !(c > 0.0) {
                                    errs.push("runtime.rate_cap: must be positive".to_string());
                                }
                            }
                        }
                    }
                }
            }
            ExperimentKind::Spectrum => match &self.spectrum {
                None => errs.push("spectrum: section required for spectrum experiments".to_string()),
                Some(sp) => {
                    if sp.episodes == 0 {
                        errs.push("spectrum.episodes: must be positive".to_string());
                    }
                    if sp.episode_len == Some(0) {
                        errs.push("spectrum.episode_len: must be positive".to_string());
                    }
                    let continuing = matches!(self.env, EnvSpec::Synthetic(_) | EnvSpec::RandomWalk(_));
                    if continuing && sp.episode_len.is_none() {
                        errs.push("spectrum.episode_len: required for environments without terminal states".to_string());
                    }
                    if !(sp.mass_fraction > 0.0 && sp.mass_fraction <= 1.0) {
                        errs.push("spectrum.mass_fraction: must lie in (0, 1]".to_string());
                    }
                    if !(0.0..=1.0).contains(&sp.lambda) {
                        errs.push("spectrum.lambda: must lie in [0, 1]".to_string());
                    }
                    if sp.points.is_empty() {
                        errs.push("spectrum.points: at least one point required".to_string());
                    }
                    for p in &sp.points {
                        match p.features.build::<f64>() {
                            Ok(m) if m.dim() > MAX_SPECTRUM_DIM => errs.push(format!(
                                "spectrum.points.{}: d = {} exceeds {MAX_SPECTRUM_DIM}; a dense SVD of that size is not supported, reduce the grid or layer count",
                                p.label,
                                m.dim()
                            )),
                            Ok(_) => {}
                            Err(e) => errs.push(format!("spectrum.points.{}: {e}", p.label)),
                        }
                    }
                }
            },
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(errs))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const RANK_SWEEP: &str = r#"
name = "rank_sweep"
seeds = [1, 2]
samples = 1000

[env]
kind = "mountain_car"

[features]
kind = "rbf"
state_lows = [-1.2, -0.07]
state_highs = [0.5, 0.07]
centers_per_dim = 8
width_fraction = 0.12

[[agents]]
algorithm = "tlstd"
batch_size = 10
[agents.sweep]
rank = [10, 30]
lambda = [0.0, 0.5]

[[agents]]
algorithm = "td"
alpha0 = 0.1
"#;

    #[test]
    fn parses_and_expands() {
        let cfg = ExperimentConfig::from_toml(RANK_SWEEP).unwrap();
        cfg.validate().unwrap();
        let pts = cfg.sweep_points().unwrap();
        let labels: Vec<&str> = pts.iter().map(|p| p.label.as_str()).collect();
        assert_eq!(
            labels,
            ["tlstd_lambda=0.0_rank=10", "tlstd_lambda=0.0_rank=30", "tlstd_lambda=0.5_rank=10", "tlstd_lambda=0.5_rank=30", "td"]
        );
        assert_eq!(pts[3].agent.rank, Some(30));
        assert_eq!(pts[3].agent.lambda, 0.5);
        assert_eq!(pts[3].agent.batch_size, 10);
    }

    #[test]
    fn lists_every_problem() {
        let text = RANK_SWEEP
            .replace("seeds = [1, 2]", "seeds = []")
            .replace("rank = [10, 30]", "rank = [10, 300]")
            .replace("alpha0 = 0.1", "alpha0 = -1.0");
        let err = ExperimentConfig::from_toml(&text).unwrap().validate().unwrap_err();
        let ConfigError::Invalid(list) = err else { panic!() };
        assert!(list.iter().any(|e| e.starts_with("seeds")));
        assert!(list.iter().any(|e| e.contains("rank=300")));
        assert!(list.iter().any(|e| e.starts_with("agents.td")));
    }

    #[test]
    fn geometric_schedule() {
        let s = CheckpointSchedule::Geometric { first: 10, factor: 1.5 };
        assert_eq!(s.points(0), vec![0]);
        assert_eq!(s.points(40), vec![0, 10, 15, 23, 35, 40]);
        let p = s.points(10_000);
        assert!(p.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(*p.last().unwrap(), 10_000);
    }

    #[test]
    fn oversized_spectrum_refused() {
        let text = r#"
name = "spec"
kind = "spectrum"
[env]
kind = "mountain_car"
[spectrum]
episodes = 10
[[spectrum.points]]
label = "huge"
[spectrum.points.features]
kind = "rbf"
state_lows = [-1.2, -0.07]
state_highs = [0.5, 0.07]
centers_per_dim = 70
width_fraction = 0.1
"#;
        let err = ExperimentConfig::from_toml(text).unwrap().validate().unwrap_err();
        assert!(err.to_string().contains("exceeds 4096"));
    }
}
