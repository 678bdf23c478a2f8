//! Feature constructions for continuous low-dimensional states.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("invalid feature configuration: {0}")]
    InvalidConfig(String),
}

/// A feature vector in either dense or sorted sparse form.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureVector<T: Real> {
    Dense(DVector<T>),
    /// Sorted, unique indices below `dim`.
    Sparse {
        dim: usize,
        indices: Vec<usize>,
        values: Vec<T>,
    },
}

impl<T: Real> FeatureVector<T> {
    pub fn dense(values: DVector<T>) -> Self {
        FeatureVector::Dense(values)
    }

    /// Builds a sparse vector, sorting the pairs by index. Duplicate indices are summed.
    pub fn sparse(dim: usize, mut pairs: Vec<(usize, T)>) -> Self {
        pairs.sort_by_key(|p| p.0);
        let mut indices: Vec<usize> = Vec::with_capacity(pairs.len());
        let mut values: Vec<T> = Vec::with_capacity(pairs.len());
        for (i, v) in pairs {
            assert!(i < dim, "sparse index {i} out of range for dimension {dim}");
            if indices.last() == Some(&i) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(i);
                values.push(v);
            }
        }
        FeatureVector::Sparse { dim, indices, values }
    }

    pub fn zeros(dim: usize) -> Self {
        FeatureVector::Sparse {
            dim,
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            FeatureVector::Dense(v) => v.len(),
            FeatureVector::Sparse { dim, .. } => *dim,
        }
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self, FeatureVector::Sparse { .. })
    }

    /// Number of stored entries.
    pub fn nnz(&self) -> usize {
        match self {
            FeatureVector::Dense(v) => v.len(),
            FeatureVector::Sparse { indices, .. } => indices.len(),
        }
    }

    pub fn dot(&self, w: &DVector<T>) -> T {
        match self {
            FeatureVector::Dense(v) => v.dot(w),
            FeatureVector::Sparse { indices, values, .. } => indices
                .iter()
                .zip(values)
                .fold(T::zero(), |acc, (&i, &v)| acc + v * w[i]),
        }
    }

    /// `target += scale * self`.
    pub fn add_scaled_to(&self, target: &mut DVector<T>, scale: T) {
        match self {
            FeatureVector::Dense(v) => target.axpy(scale, v, T::one()),
            FeatureVector::Sparse { indices, values, .. } => {
                for (&i, &v) in indices.iter().zip(values) {
                    target[i] += scale * v;
                }
            }
        }
    }

    pub fn to_dense(&self) -> DVector<T> {
        match self {
            FeatureVector::Dense(v) => v.clone(),
            FeatureVector::Sparse { dim, .. } => {
                let mut out = DVector::zeros(*dim);
                self.add_scaled_to(&mut out, T::one());
                out
            }
        }
    }

    /// Iterates the stored `(index, value)` pairs; dense vectors yield every entry.
    pub fn iter(&self) -> Box<dyn Iterator<Item = (usize, T)> + '_> {
        match self {
            FeatureVector::Dense(v) => Box::new(v.iter().copied().enumerate()),
            FeatureVector::Sparse { indices, values, .. } => {
                Box::new(indices.iter().copied().zip(values.iter().copied()))
            }
        }
    }
}

/// Maps a continuous state to a feature vector of fixed dimension.
pub trait FeatureMap<T: Real>: Send + Sync {
    fn dim(&self) -> usize;
    fn features(&self, state: &[f64]) -> FeatureVector<T>;
}

fn check_bounds(lows: &[f64], highs: &[f64]) -> Result<(), FeatureError> {
    if lows.is_empty() || lows.len() != highs.len() {
        return Err(FeatureError::InvalidConfig(format!(
            "state bounds must be non-empty and of equal length ({} vs {})",
            lows.len(),
            highs.len()
        )));
    }
    for (i, (lo, hi)) in lows.iter().zip(highs).enumerate() {
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(FeatureError::InvalidConfig(format!(
                "dimension {i}: need finite low < high, got [{lo}, {hi}]"
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileCodingConfig {
    pub state_lows: Vec<f64>,
    pub state_highs: Vec<f64>,
    pub tiles_per_dim: usize,
    pub num_layers: usize,
    /// Per-layer, per-dimension offsets as a fraction of one cell width. When
    /// absent, layer `j` is displaced by `j / num_layers` in every dimension.
    #[serde(default)]
    pub layer_offsets: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub include_bias: bool,
}

impl TileCodingConfig {
    pub fn new(state_lows: Vec<f64>, state_highs: Vec<f64>, tiles_per_dim: usize, num_layers: usize) -> Self {
        Self {
            state_lows,
            state_highs,
            tiles_per_dim,
            num_layers,
            layer_offsets: None,
            include_bias: false,
        }
    }
}

/// Grid tile coder with explicit (hash-free) index arithmetic.
///
/// Indices are laid out layer-major, then row-major over the grid cells of a
/// layer, with the first state dimension varying slowest. The bias feature, if
/// any, is the last index.
#[derive(Debug, Clone)]
pub struct TileCoder {
    cfg: TileCodingConfig,
    offsets: Vec<Vec<f64>>,
    cells_per_layer: usize,
    dim: usize,
}

impl TileCoder {
    pub fn new(cfg: TileCodingConfig) -> Result<Self, FeatureError> {
        check_bounds(&cfg.state_lows, &cfg.state_highs)?;
        if cfg.tiles_per_dim == 0 || cfg.num_layers == 0 {
            return Err(FeatureError::InvalidConfig(
                "tiles_per_dim and num_layers must be positive".into(),
            ));
        }
        let dims = cfg.state_lows.len();
        let offsets = match &cfg.layer_offsets {
            Some(o) => {
                if o.len() != cfg.num_layers || o.iter().any(|l| l.len() != dims) {
                    return Err(FeatureError::InvalidConfig(
                        "layer_offsets must be num_layers x state dimensions".into(),
                    ));
                }
                if o.iter().flatten().any(|x| !(0.0..1.0).contains(x)) {
                    return Err(FeatureError::InvalidConfig("layer offsets must lie in [0, 1)".into()));
                }
                o.clone()
            }
            None => (0..cfg.num_layers)
                .map(|j| vec![j as f64 / cfg.num_layers as f64; dims])
                .collect(),
        };
        let cells_per_layer = cfg
            .tiles_per_dim
            .checked_pow(dims as u32)
            .ok_or_else(|| FeatureError::InvalidConfig("grid too large".into()))?;
        let dim = cells_per_layer * cfg.num_layers + usize::from(cfg.include_bias);
        Ok(Self {
            cfg,
            offsets,
            cells_per_layer,
            dim,
        })
    }

    pub fn config(&self) -> &TileCodingConfig {
        &self.cfg
    }

    /// Active indices for `state`, one per layer (plus the bias), in increasing order.
    pub fn active_indices(&self, state: &[f64]) -> Vec<usize> {
        let tiles = self.cfg.tiles_per_dim;
        let mut out = Vec::with_capacity(self.cfg.num_layers + 1);
        for (layer, offs) in self.offsets.iter().enumerate() {
            let mut cell = 0usize;
            for (k, &s) in state.iter().enumerate() {
                let lo = self.cfg.state_lows[k];
                let hi = self.cfg.state_highs[k];
                let unit = ((s.clamp(lo, hi) - lo) / (hi - lo)) * tiles as f64 - offs[k];
                let idx = if unit <= 0.0 {
                    0
                } else {
                    (unit.floor() as usize).min(tiles - 1)
                };
                cell = cell * tiles + idx;
            }
            out.push(layer * self.cells_per_layer + cell);
        }
        if self.cfg.include_bias {
            out.push(self.dim - 1);
        }
        out
    }
}

impl<T: Real> FeatureMap<T> for TileCoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn features(&self, state: &[f64]) -> FeatureVector<T> {
        assert_eq!(state.len(), self.cfg.state_lows.len(), "state dimension mismatch");
        let indices = self.active_indices(state);
        let values = vec![T::one(); indices.len()];
        FeatureVector::Sparse {
            dim: self.dim,
            indices,
            values,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbfGridConfig {
    pub state_lows: Vec<f64>,
    pub state_highs: Vec<f64>,
    pub centers_per_dim: usize,
    /// Kernel width as a fraction of each dimension's range.
    pub width_fraction: f64,
    #[serde(default)]
    pub include_bias: bool,
}

impl RbfGridConfig {
    pub fn new(state_lows: Vec<f64>, state_highs: Vec<f64>, centers_per_dim: usize, width_fraction: f64) -> Self {
        Self {
            state_lows,
            state_highs,
            centers_per_dim,
            width_fraction,
            include_bias: false,
        }
    }
}

/// Unnormalized Gaussian radial basis functions on a uniform grid whose outer
/// centers sit on the state bounds.
#[derive(Debug, Clone)]
pub struct RbfGrid {
    cfg: RbfGridConfig,
    // normalized center coordinates along one axis
    axis: Vec<f64>,
    dim: usize,
}

impl RbfGrid {
    pub fn new(cfg: RbfGridConfig) -> Result<Self, FeatureError> {
        check_bounds(&cfg.state_lows, &cfg.state_highs)?;
        if cfg.centers_per_dim == 0 {
            return Err(FeatureError::InvalidConfig("centers_per_dim must be positive".into()));
        }
        if !(cfg.width_fraction > 0.0) || !cfg.width_fraction.is_finite() {
            return Err(FeatureError::InvalidConfig(format!(
                "width_fraction must be positive, got {}",
                cfg.width_fraction
            )));
        }
        let n = cfg.centers_per_dim;
        let axis = if n == 1 {
            vec![0.5]
        } else {
            (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
        };
        let dims = cfg.state_lows.len();
        let grid = n
            .checked_pow(dims as u32)
            .ok_or_else(|| FeatureError::InvalidConfig("grid too large".into()))?;
        let dim = grid + usize::from(cfg.include_bias);
        Ok(Self { cfg, axis, dim })
    }

    pub fn config(&self) -> &RbfGridConfig {
        &self.cfg
    }

    /// Center of feature `index` in state coordinates.
    pub fn center(&self, mut index: usize) -> Vec<f64> {
        let dims = self.cfg.state_lows.len();
        let n = self.cfg.centers_per_dim;
        let mut c = vec![0.0; dims];
        for k in (0..dims).rev() {
            let lo = self.cfg.state_lows[k];
            let hi = self.cfg.state_highs[k];
            c[k] = lo + self.axis[index % n] * (hi - lo);
            index /= n;
        }
        c
    }
}

impl<T: Real> FeatureMap<T> for RbfGrid {
    fn dim(&self) -> usize {
        self.dim
    }

    fn features(&self, state: &[f64]) -> FeatureVector<T> {
        let dims = self.cfg.state_lows.len();
        assert_eq!(state.len(), dims, "state dimension mismatch");
        let n = self.cfg.centers_per_dim;
        let inv_two_var = 1.0 / (2.0 * self.cfg.width_fraction * self.cfg.width_fraction);
        // per-axis kernel factors; the Gaussian separates across dimensions
        let factors: Vec<Vec<f64>> = (0..dims)
            .map(|k| {
                let lo = self.cfg.state_lows[k];
                let hi = self.cfg.state_highs[k];
                let s = (state[k] - lo) / (hi - lo);
                self.axis
                    .iter()
                    .map(|&c| {
                        let diff = s - c;
                        (-diff * diff * inv_two_var).exp()
                    })
                    .collect()
            })
            .collect();
        let grid = self.dim - usize::from(self.cfg.include_bias);
        let mut out = DVector::zeros(self.dim);
        for idx in 0..grid {
            let mut rest = idx;
            let mut v = 1.0;
            for k in (0..dims).rev() {
                v *= factors[k][rest % n];
                rest /= n;
            }
            out[idx] = T::lit(v);
        }
        if self.cfg.include_bias {
            out[grid] = T::one();
        }
        FeatureVector::Dense(out)
    }
}

/// Serializable choice of feature construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureSpec {
    TileCoding(TileCodingConfig),
    Rbf(RbfGridConfig),
}

impl FeatureSpec {
    pub fn build<T: Real>(&self) -> Result<Box<dyn FeatureMap<T>>, FeatureError> {
        Ok(match self {
            FeatureSpec::TileCoding(cfg) => Box::new(TileCoder::new(cfg.clone())?),
            FeatureSpec::Rbf(cfg) => Box::new(RbfGrid::new(cfg.clone())?),
        })
    }
}
