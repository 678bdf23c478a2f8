//! Incremental truncated-SVD LSTD(lambda) for policy evaluation, with exact
//! LSTD, iLSTD and TD(lambda) baselines, the environments and features used to
//! compare them, and an experiment harness.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agents;
pub mod bench;
pub mod envs;
pub mod eval;
pub mod features;
pub mod linalg;
pub mod scalar;
pub mod svd;

pub use scalar::Real;

pub type TruncatedSvdF64 = svd::TruncatedSvd<f64>;
pub type TruncatedSvdF32 = svd::TruncatedSvd<f32>;
pub type TransitionF64 = agents::Transition<f64>;
pub type TransitionF32 = agents::Transition<f32>;
pub type FeatureVectorF64 = features::FeatureVector<f64>;
pub type FeatureVectorF32 = features::FeatureVector<f32>;
pub type TlstdAgentF64 = agents::TlstdAgent<f64>;
pub type TlstdAgentF32 = agents::TlstdAgent<f32>;
pub type LinearSystemF64 = agents::LinearSystem<f64>;
