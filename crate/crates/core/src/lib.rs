//! Learned stereo depth engine.
//!
//! The crate bundles a small reverse-mode autodiff core ([`Graph`]), the
//! cost-volume stereo network built on it ([`model`]), its training
//! objective ([`loss`]) and loop ([`train`]), confidence and region
//! filtering ([`postproc`]), camera geometry ([`geometry`]) and the
//! evaluation/IO harness ([`metrics`], [`pfm`], [`ply`], [`synth`],
//! [`pipeline`]).

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod conv;
mod error;
mod graph;
mod ops;
mod real;
mod tensor;

pub mod geometry;
pub mod loss;
mod mask;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod pfm;
pub mod pipeline;
pub mod ply;
pub mod postproc;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
pub use geometry::{CameraRig, PointCloud};
pub use graph::{Graph, Var};
pub use loss::{LabeledSample, LossConfig};
pub use mask::Mask;
pub use metrics::MetricReport;
pub use model::{ModelConfig, StereoOutput, StereoPair, WeightSet};
pub use postproc::FilteredDisparity;
pub use real::Real;
pub use synth::SynthScene;
pub use tensor::Tensor;
pub use train::{AugmentFlags, EpochStats, TrainConfig};
