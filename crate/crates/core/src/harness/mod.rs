//! Experiment orchestration: configuration, dataset rendering, the toy
//! training loop, evaluation, cost/timing benchmarks and the oracle sweep.

mod bench;
mod data;
mod eval;
mod oracle_cmd;
mod render;
mod train;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attention::{AttentionError, AttentionMode, DecoderConfig};
use crate::depthaug::{DepthAugError, NoiseSpec, NoiseTerm, S1};
use crate::imageio::ImageError;
use crate::metrics::{MatcherConfig, MetricError};
use crate::tensorcore::TensorError;

pub use bench::{cmd_bench, linear_fit_r2, BenchReport, CostRow, TimingRow};
pub use data::{build_input, image_to_tensor, latent_skip, load_dataset, tensor_to_image, DepthNoise};
pub use eval::{cmd_eval, cmd_eval_identity, EvalReport, EvalRow};
pub use oracle_cmd::{cmd_oracle, OracleCheck};
pub use render::{cmd_render, verify_render_dir, RenderManifest, SceneEntry, ViewFiles};
pub use train::{cmd_train, EpochLoss, RunRecord, WEIGHTS_DIR};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Attention(#[from] AttentionError),
    #[error(transparent)]
    DepthAug(#[from] DepthAugError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("dataset: {0}")]
    Dataset(String),
    #[error("training diverged at epoch {epoch}, batch {batch}: loss {loss}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },
}

pub type Result<T> = std::result::Result<T, HarnessError>;

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub(crate) fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(io_err(path))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(io_err(path))
}

/// The five model variants compared in the ablation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Ours,
    FullEpi,
    NoEpi,
    NoDepthAug,
    IndepAug,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Ours,
        Variant::FullEpi,
        Variant::NoEpi,
        Variant::NoDepthAug,
        Variant::IndepAug,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Ours => "ours",
            Variant::FullEpi => "full_epi",
            Variant::NoEpi => "no_epi",
            Variant::NoDepthAug => "no_depth_aug",
            Variant::IndepAug => "indep_aug",
        }
    }

    /// The switches this variant sets; everything else is shared.
    pub fn wiring(self) -> Wiring {
        let (mode, train_noise) = match self {
            Variant::Ours => (AttentionMode::Truncated, DepthNoise::Structured),
            Variant::FullEpi => (AttentionMode::Full, DepthNoise::Structured),
            Variant::NoEpi => (AttentionMode::None, DepthNoise::Structured),
            Variant::NoDepthAug => (AttentionMode::Truncated, DepthNoise::None),
            Variant::IndepAug => (AttentionMode::Truncated, DepthNoise::Independent),
        };
        Wiring { mode, train_noise }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variant {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| HarnessError::Config(format!("unknown variant {s:?}")))
    }
}

/// Ablation switch points. Depth noise only matters when the mode reads depth.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Wiring {
    pub mode: AttentionMode,
    pub train_noise: DepthNoise,
}

/// Where inference depth comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepthSource {
    Gt,
    GtPlusStructured,
    GtPlusIndependent,
}

impl DepthSource {
    pub fn noise(self) -> DepthNoise {
        match self {
            DepthSource::Gt => DepthNoise::None,
            DepthSource::GtPlusStructured => DepthNoise::Structured,
            DepthSource::GtPlusIndependent => DepthNoise::Independent,
        }
    }
}

impl std::str::FromStr for DepthSource {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gt" => Ok(DepthSource::Gt),
            "gt_plus_structured" => Ok(DepthSource::GtPlusStructured),
            "gt_plus_independent" => Ok(DepthSource::GtPlusIndependent),
            _ => Err(HarnessError::Config(format!("unknown depth source {s:?}"))),
        }
    }
}

/// Everything a run depends on. Serialized as a flat TOML document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub variant: Variant,

    pub ortho_scale: f64,
    pub resolution: usize,
    pub n_scenes: usize,
    pub dataset_seed: u64,
    pub eval_scenes: usize,
    pub eval_seed: u64,
    pub val_scenes: usize,

    pub levels: usize,
    pub d: usize,
    pub n_p: Vec<usize>,
    pub r: f64,
    pub residual: bool,
    pub use_plucker: bool,
    pub front_condition: bool,
    pub full_max_resolution: usize,
    /// Decoder predicts a residual over the upsampled latent.
    pub latent_skip: bool,

    pub noise_resolutions: Vec<usize>,
    pub noise_scales: Vec<f64>,
    pub eval_depth_source: DepthSource,
    pub eval_noise_seed: u64,

    pub epochs: usize,
    pub learning_rate: f64,
    /// Heavy-ball coefficient; 0 gives plain gradient descent.
    pub momentum: f64,
    pub batch_size: usize,
    pub train_seed: u64,
    pub init_seed: u64,

    pub ncc_threshold: f64,
    pub ncc_window: usize,
    pub ncc_stride: usize,

    pub bench_resolutions: Vec<usize>,
    pub bench_d: usize,
    pub bench_n_p: usize,
    pub bench_views: usize,
    pub kv_budget_bytes: u64,
    pub timing_resolutions: Vec<usize>,
    pub timing_d: usize,
    pub timing_repeats: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Ours,
            ortho_scale: 1.0,
            resolution: 64,
            n_scenes: 8,
            dataset_seed: 7,
            eval_scenes: 8,
            eval_seed: 1007,
            val_scenes: 2,
            levels: 4,
            d: 8,
            n_p: vec![7, 7, 7, 2],
            r: 0.1,
            residual: true,
            use_plucker: true,
            front_condition: true,
            full_max_resolution: 32,
            latent_skip: true,
            noise_resolutions: vec![3, 16, 32],
            noise_scales: vec![S1, S1 / 3.0, S1 / 9.0],
            eval_depth_source: DepthSource::GtPlusStructured,
            eval_noise_seed: 900_001,
            epochs: 5,
            learning_rate: 1e-3,
            momentum: 0.0,
            batch_size: 2,
            train_seed: 11,
            init_seed: 3,
            ncc_threshold: 0.9,
            ncc_window: 7,
            ncc_stride: 4,
            bench_resolutions: vec![32, 64, 128, 256],
            bench_d: 64,
            bench_n_p: 2,
            bench_views: 6,
            kv_budget_bytes: 8 << 30,
            timing_resolutions: vec![16, 24, 32, 40],
            timing_d: 8,
            timing_repeats: 3,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is plain data")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_toml(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()).map_err(io_err(path))
    }

    pub fn with_variant(&self, variant: Variant) -> Self {
        Self {
            variant,
            ..self.clone()
        }
    }

    /// Side of the level-1 input; the latent is the color block-averaged to it.
    pub fn base_resolution(&self) -> usize {
        self.resolution >> (self.levels - 1)
    }

    pub fn latent_factor(&self) -> usize {
        1 << (self.levels - 1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.levels == 0 || self.levels > 4 {
            return bad(format!("levels must be 1..=4, got {}", self.levels));
        }
        if self.n_p.len() != self.levels {
            return bad(format!("n_p has {} entries for {} levels", self.n_p.len(), self.levels));
        }
        if self.resolution % self.latent_factor() != 0 || self.base_resolution() < 2 {
            return bad(format!(
                "resolution {} is not divisible into {} levels",
                self.resolution, self.levels
            ));
        }
        if self.noise_resolutions.len() != self.noise_scales.len() {
            return bad("noise_resolutions and noise_scales differ in length".into());
        }
        if self.n_scenes == 0 || self.eval_scenes == 0 || self.batch_size == 0 {
            return bad("n_scenes, eval_scenes and batch_size must be positive".into());
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad(format!("learning_rate {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum {} outside [0, 1)", self.momentum));
        }
        if self.ncc_window % 2 == 0 || self.ncc_stride == 0 {
            return bad("ncc_window must be odd and ncc_stride positive".into());
        }
        self.decoder_config().validate()?;
        Ok(())
    }

    /// Noise spec for depth maps at `resolution`, with `seed`.
    pub fn noise_spec(&self, seed: u64) -> NoiseSpec {
        NoiseSpec {
            terms: self
                .noise_resolutions
                .iter()
                .zip(&self.noise_scales)
                .map(|(&resolution, &scale)| NoiseTerm { resolution, scale })
                .collect(),
            seed,
        }
        .clamped_to(self.resolution)
    }

    pub fn decoder_config(&self) -> DecoderConfig {
        DecoderConfig {
            base_resolution: self.base_resolution(),
            levels: self.levels,
            d: self.d,
            in_channels: 3,
            out_channels: 3,
            n_p: self.n_p.clone(),
            r: self.r,
            residual: self.residual,
            use_plucker: self.use_plucker,
            front_condition: self.front_condition,
            mode: self.variant.wiring().mode,
            full_max_resolution: self.full_max_resolution,
            ortho_scale: self.ortho_scale,
            ..DecoderConfig::default()
        }
    }

    pub fn matcher_config(&self) -> MatcherConfig {
        MatcherConfig {
            threshold: self.ncc_threshold,
            window: self.ncc_window,
            stride: self.ncc_stride,
            z_range: DecoderConfig::default().z_range,
            ..MatcherConfig::default()
        }
    }
}

/// Deterministic seed derivation from a base seed and a path of indices.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    let mut x = base;
    for &p in path {
        x = splitmix(x ^ splitmix(p.wrapping_add(0x9e37_79b9_7f4a_7c15)));
    }
    x
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_through_toml() {
        let mut cfg = ExperimentConfig::default();
        cfg.variant = Variant::IndepAug;
        cfg.noise_scales = vec![0.1, 0.1 / 3.0, 0.1 / 9.0];
        cfg.eval_depth_source = DepthSource::GtPlusIndependent;
        let text = cfg.to_toml();
        assert!(!text.lines().any(|l| l.starts_with('[')), "flat document expected:\n{text}");
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_documents_fill_defaults_and_reject_unknown_keys() {
        let cfg = ExperimentConfig::from_toml("variant = \"no_epi\"\nepochs = 2\n").unwrap();
        assert_eq!(cfg.variant, Variant::NoEpi);
        assert_eq!(cfg.epochs, 2);
        assert_eq!(cfg.d, ExperimentConfig::default().d);
        assert!(ExperimentConfig::from_toml("epoch = 2\n").is_err());
        assert!(ExperimentConfig::from_toml("n_p = [7, 7]\n").is_err());
    }

    #[test]
    fn variants_differ_only_at_their_switch_points() {
        let ours = Variant::Ours.wiring();
        let flags = |v: Variant| {
            let w = v.wiring();
            (w.mode != ours.mode, w.train_noise != ours.train_noise)
        };
        assert_eq!(flags(Variant::Ours), (false, false));
        assert_eq!(flags(Variant::NoEpi), (true, false));
        assert_eq!(flags(Variant::FullEpi), (true, false));
        assert_eq!(flags(Variant::NoDepthAug), (false, true));
        assert_eq!(flags(Variant::IndepAug), (false, true));
        assert_eq!(Variant::NoEpi.wiring().mode, AttentionMode::None);

        let base = ExperimentConfig::default();
        for v in Variant::ALL {
            let a = base.decoder_config();
            let b = base.with_variant(v).decoder_config();
            assert_eq!(
                DecoderConfig {
                    mode: a.mode,
                    ..b.clone()
                },
                a,
                "{v} changes more than the attention mode"
            );
            assert_eq!(b.mode, v.wiring().mode);
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
    }

    #[test]
    fn derived_seeds_are_distinct_and_stable() {
        let a = derive_seed(1, &[0, 1]);
        assert_eq!(a, derive_seed(1, &[0, 1]));
        assert_ne!(a, derive_seed(1, &[1, 0]));
        assert_ne!(a, derive_seed(2, &[0, 1]));
    }
}
