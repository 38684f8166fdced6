//! Multi-view pixel alignment toolkit: depth-truncated epipolar attention,
//! structured-noise depth augmentation, a synthetic orthographic multi-view
//! renderer, consistency metrics and the toy training harness around them.

pub mod attention;
pub mod depthaug;
pub mod geometry;
pub mod harness;
pub mod imageio;
pub mod metrics;
pub mod oracle;
pub mod synthscene;
pub mod tensorcore;

pub use geometry::{Camera, DepthMap, Ray, TruncatedSamples, ViewId};
pub use tensorcore::{Scalar, Tape, Tensor, TensorError, Var};
