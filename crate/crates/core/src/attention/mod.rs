//! Depth-truncated epipolar attention over multi-view feature maps, the
//! full-epipolar and no-attention baselines, and a small decoder stack that
//! applies the block at every resolution level.

mod block;
mod decoder;

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Camera, GeometryError, ViewId};
use crate::tensorcore::{uniform_init, ParamStore, Scalar, Tape, Tensor, TensorError, Var};

pub use block::{
    aggregate_views, attention_on_tape, bilinear_sample, bilinear_taps, full_epipolar_attention,
    truncated_epipolar_attention, AttentionOutput, AttentionTrace, KeySampling,
};
pub use decoder::{
    decoder_forward, decoder_param_shapes, decoder_stack, init_decoder_weights, register_store, AttentionMode,
    DecoderConfig, DecoderInput,
};

/// Points sampled per pixel at each of the four levels.
pub const N_P_SCHEDULE: [usize; 4] = [7, 7, 7, 2];
/// Half-width of the truncation window along the viewing ray, world units.
pub const TRUNCATION_RADIUS: f64 = 0.1;
/// Width of a Plücker ray code.
pub const PLUCKER_DIM: usize = 6;

#[derive(Debug, Error)]
pub enum AttentionError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("contract violated: {0}")]
    Contract(String),
}

pub(crate) fn contract(msg: impl Into<String>) -> AttentionError {
    AttentionError::Contract(msg.into())
}

/// Per-view features `[d × H × W]` at one level of the hierarchy.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap<T: Scalar = f32> {
    pub data: Tensor<T>,
    pub view_id: ViewId,
    pub level: usize,
}

impl<T: Scalar> FeatureMap<T> {
    pub fn new(data: Tensor<T>, view_id: ViewId, level: usize) -> Result<Self, AttentionError> {
        let s = data.shape();
        if s.len() != 3 || s[1] != s[2] || s[1] == 0 {
            return Err(contract(format!("feature map must be [d, H, H], got {s:?}")));
        }
        if !(1..=N_P_SCHEDULE.len()).contains(&level) {
            return Err(contract(format!("level {level} outside 1..=4")));
        }
        Ok(Self { data, view_id, level })
    }

    pub fn channels(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn resolution(&self) -> usize {
        self.data.shape()[1]
    }
}

/// Cameras and feature maps of all rig views at one level, in rig order.
#[derive(Clone, Debug)]
pub struct MultiViewSet<T: Scalar = f32> {
    pub cameras: Vec<Camera>,
    pub features: Vec<FeatureMap<T>>,
}

impl<T: Scalar> MultiViewSet<T> {
    pub fn new(cameras: Vec<Camera>, features: Vec<FeatureMap<T>>) -> Result<Self, AttentionError> {
        if cameras.len() != features.len() || cameras.len() < 2 {
            return Err(contract(format!(
                "{} cameras for {} feature maps",
                cameras.len(),
                features.len()
            )));
        }
        let res = features[0].resolution();
        for (cam, fm) in cameras.iter().zip(&features) {
            if fm.resolution() != res || cam.width != res || cam.height != res || cam.view_id != fm.view_id {
                return Err(contract("cameras and feature maps must share view order and resolution"));
            }
        }
        Ok(Self { cameras, features })
    }

    pub fn index_of(&self, view: ViewId) -> Result<usize, AttentionError> {
        self.cameras
            .iter()
            .position(|c| c.view_id == view)
            .ok_or_else(|| contract(format!("view {view} not in set")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionConfig {
    pub n_p: usize,
    pub r: f64,
    pub d: usize,
    pub residual: bool,
    pub use_plucker: bool,
    /// Nearest-pixel instead of bilinear feature reads.
    pub nearest: bool,
}

impl Default for AttentionConfig {
    fn default() -> Self {
        Self {
            n_p: N_P_SCHEDULE[0],
            r: TRUNCATION_RADIUS,
            d: 16,
            residual: true,
            use_plucker: true,
            nearest: false,
        }
    }
}

impl AttentionConfig {
    /// Width of one view's slot in the aggregation MLP input.
    pub fn slot_width(&self) -> usize {
        self.d + if self.use_plucker { PLUCKER_DIM } else { 0 }
    }

    pub fn mlp_input_width(&self, n_views: usize) -> usize {
        n_views * self.slot_width()
    }

    pub fn validate(&self) -> Result<(), AttentionError> {
        if self.n_p == 0 || self.d == 0 || !(self.r > 0.0) {
            return Err(contract(format!(
                "need n_p ≥ 1, d ≥ 1, r > 0 (got {}, {}, {})",
                self.n_p, self.d, self.r
            )));
        }
        Ok(())
    }
}

/// Projection matrices `[d × d]` and the aggregation MLP
/// (`w1: [d × N_v·slot]`, `w2: [d × d]`).
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionWeights<T: Scalar = f32> {
    pub w_q: Tensor<T>,
    pub w_k: Tensor<T>,
    pub w_v: Tensor<T>,
    pub w1: Tensor<T>,
    pub b1: Tensor<T>,
    pub w2: Tensor<T>,
    pub b2: Tensor<T>,
}

pub const ATTENTION_PARAM_NAMES: [&str; 7] = ["w_q", "w_k", "w_v", "w1", "b1", "w2", "b2"];

impl<T: Scalar> AttentionWeights<T> {
    fn shapes(cfg: &AttentionConfig, n_views: usize) -> [Vec<usize>; 7] {
        let d = cfg.d;
        [
            vec![d, d],
            vec![d, d],
            vec![d, d],
            vec![d, cfg.mlp_input_width(n_views)],
            vec![d],
            vec![d, d],
            vec![d],
        ]
    }

    pub fn init<R: Rng>(cfg: &AttentionConfig, n_views: usize, rng: &mut R) -> Self {
        let s = Self::shapes(cfg, n_views);
        let fan_in = cfg.mlp_input_width(n_views);
        Self {
            w_q: uniform_init(&s[0], cfg.d, rng),
            w_k: uniform_init(&s[1], cfg.d, rng),
            w_v: uniform_init(&s[2], cfg.d, rng),
            w1: uniform_init(&s[3], fan_in, rng),
            b1: uniform_init(&s[4], fan_in, rng),
            w2: uniform_init(&s[5], cfg.d, rng),
            b2: uniform_init(&s[6], cfg.d, rng),
        }
    }

    pub fn zeros(cfg: &AttentionConfig, n_views: usize) -> Self {
        let s = Self::shapes(cfg, n_views);
        Self {
            w_q: Tensor::zeros(&s[0]),
            w_k: Tensor::zeros(&s[1]),
            w_v: Tensor::zeros(&s[2]),
            w1: Tensor::zeros(&s[3]),
            b1: Tensor::zeros(&s[4]),
            w2: Tensor::zeros(&s[5]),
            b2: Tensor::zeros(&s[6]),
        }
    }

    pub fn tensors(&self) -> [&Tensor<T>; 7] {
        [&self.w_q, &self.w_k, &self.w_v, &self.w1, &self.b1, &self.w2, &self.b2]
    }

    /// Checks every shape against `cfg` and the number of non-reference views.
    pub fn check(&self, cfg: &AttentionConfig, n_views: usize) -> Result<(), AttentionError> {
        for ((name, t), s) in ATTENTION_PARAM_NAMES
            .iter()
            .zip(self.tensors())
            .zip(Self::shapes(cfg, n_views))
        {
            if t.shape() != s.as_slice() {
                return Err(contract(format!("{name} has shape {:?}, expected {s:?}", t.shape())));
            }
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> AttentionWeights<U> {
        AttentionWeights {
            w_q: self.w_q.cast(),
            w_k: self.w_k.cast(),
            w_v: self.w_v.cast(),
            w1: self.w1.cast(),
            b1: self.b1.cast(),
            w2: self.w2.cast(),
            b2: self.b2.cast(),
        }
    }

    /// Records the weights on `tape`, as trainable leaves or as constants.
    pub fn register(&self, tape: &mut Tape<T>, trainable: bool) -> AttentionParams {
        let mut put = |t: &Tensor<T>| {
            if trainable {
                tape.param(t.clone())
            } else {
                tape.constant(t.clone())
            }
        };
        AttentionParams {
            w_q: put(&self.w_q),
            w_k: put(&self.w_k),
            w_v: put(&self.w_v),
            w1: put(&self.w1),
            b1: put(&self.b1),
            w2: put(&self.w2),
            b2: put(&self.b2),
        }
    }
}

impl AttentionWeights<f32> {
    pub fn store_into(&self, prefix: &str, store: &mut ParamStore) {
        for (name, t) in ATTENTION_PARAM_NAMES.iter().zip(self.tensors()) {
            store.insert(format!("{prefix}.{name}"), t.clone());
        }
    }

    pub fn from_store(
        prefix: &str,
        store: &ParamStore,
        cfg: &AttentionConfig,
        n_views: usize,
    ) -> Result<Self, AttentionError> {
        let s = Self::shapes(cfg, n_views);
        let get = |i: usize| store.get_shaped(&format!("{prefix}.{}", ATTENTION_PARAM_NAMES[i]), &s[i]);
        Ok(Self {
            w_q: get(0)?,
            w_k: get(1)?,
            w_v: get(2)?,
            w1: get(3)?,
            b1: get(4)?,
            w2: get(5)?,
            b2: get(6)?,
        })
    }
}

/// Tape handles of one block's weights.
#[derive(Clone, Copy, Debug)]
pub struct AttentionParams {
    pub w_q: Var,
    pub w_k: Var,
    pub w_v: Var,
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

impl AttentionParams {
    /// Looks up `{prefix}.w_q` etc. in a name → handle map.
    pub fn from_vars(vars: &BTreeMap<String, Var>, prefix: &str) -> Result<Self, AttentionError> {
        let get = |n: &str| {
            vars.get(&format!("{prefix}.{n}"))
                .copied()
                .ok_or_else(|| contract(format!("missing parameter {prefix}.{n}")))
        };
        Ok(Self {
            w_q: get("w_q")?,
            w_k: get("w_k")?,
            w_v: get("w_v")?,
            w1: get("w1")?,
            b1: get("b1")?,
            w2: get("w2")?,
            b2: get("b2")?,
        })
    }
}
