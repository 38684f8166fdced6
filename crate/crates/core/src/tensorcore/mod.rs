//! Dense tensors with tape-based reverse-mode differentiation, covering the
//! handful of primitives the attention block is built from.

mod io;
mod kernels;
mod params;
mod tape;
mod tensor;

use rand::Rng;
use thiserror::Error;

pub use io::{read_mvt1, read_mvt1_file, write_mvt1, write_mvt1_file, MVT1_MAGIC};
pub use params::{ManifestEntry, ParamStore, MANIFEST_FILE};
pub use tape::{mlp2, BiasAxis, GatherLayout, GatherPlan, Tap, Tape, Var};
pub use tensor::{Scalar, Tensor};

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape {shape:?} needs {} elements, got {len}", shape.iter().product::<usize>())]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("{op}: dimension mismatch: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("malformed MVT1 data: {0}")]
    Format(String),
    #[error("parameter store: {0}")]
    Param(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Weight init: uniform in `[-1/√fan_in, 1/√fan_in]`.
pub fn uniform_init<T: Scalar, R: Rng>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor<T> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    Tensor::from_fn(shape, |_| T::of(rng.gen_range(-bound..=bound)))
}
