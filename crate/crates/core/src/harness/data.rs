use std::path::Path;

use serde::{Deserialize, Serialize};

use super::render::RenderManifest;
use super::{derive_seed, ExperimentConfig, HarnessError, Result};
use crate::attention::{AttentionMode, DecoderInput};
use crate::depthaug::{independent_noise, pool_depth_to, structured_noise, upsample_bilinear};
use crate::geometry::{make_rig, DepthMap, ViewId};
use crate::imageio::{read_pfm_file, read_ppm_file, Image};
use crate::synthscene::{RenderedView, SceneSample};
use crate::tensorcore::Tensor;

/// Perturbation applied to ground-truth depth before it reaches the decoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepthNoise {
    None,
    Structured,
    /// Per-pixel uniform noise with the structured spec's total variance.
    Independent,
}

pub fn image_to_tensor(img: &Image) -> Tensor<f32> {
    Tensor::new(&[img.channels, img.height, img.width], img.data.clone()).expect("image buffer matches its shape")
}

/// `[3 × H × W]` tensor to an image, clamped to `[0, 1]`.
pub fn tensor_to_image(t: &Tensor<f32>) -> Image {
    let s = t.shape();
    Image::from_data(s[0], s[2], s[1], t.data().iter().map(|v| v.clamp(0.0, 1.0)).collect())
}

fn perturb(depth: &DepthMap, noise: DepthNoise, cfg: &ExperimentConfig, seed: u64) -> Result<DepthMap> {
    let spec = cfg.noise_spec(seed);
    Ok(match noise {
        DepthNoise::None => depth.clone(),
        DepthNoise::Structured => structured_noise(depth, &spec)?,
        DepthNoise::Independent => independent_noise(depth, spec.matched_independent_scale(), seed)?,
    })
}

/// Decoder input for one scene: block-averaged latents, the front condition
/// per level and, when the mode reads depth, perturbed depth pooled to every
/// level. Noise for view `v` is seeded by `derive_seed(noise_seed, [v])`.
pub fn build_input(
    views: &[RenderedView],
    cfg: &ExperimentConfig,
    noise: DepthNoise,
    noise_seed: u64,
) -> Result<DecoderInput<f32>> {
    let dcfg = cfg.decoder_config();
    if views.len() != ViewId::ALL.len() || views.iter().any(|v| v.color.width != cfg.resolution) {
        return Err(HarnessError::Dataset(format!(
            "need {} views at {}²",
            ViewId::ALL.len(),
            cfg.resolution
        )));
    }
    let latents = views
        .iter()
        .map(|v| image_to_tensor(&v.color.downsample(cfg.latent_factor())))
        .collect();
    let front = &views[ViewId::Front.index()].color;
    let front_condition = if dcfg.front_condition {
        (1..=dcfg.levels)
            .map(|l| image_to_tensor(&front.downsample(cfg.resolution / dcfg.resolution(l))))
            .collect()
    } else {
        Vec::new()
    };
    let mut depths = Vec::new();
    if dcfg.mode == AttentionMode::Truncated {
        let noisy = views
            .iter()
            .enumerate()
            .map(|(v, view)| perturb(&view.depth, noise, cfg, derive_seed(noise_seed, &[v as u64])))
            .collect::<Result<Vec<_>>>()?;
        for l in 1..=dcfg.levels {
            depths.push(
                noisy
                    .iter()
                    .map(|d| pool_depth_to(d, dcfg.resolution(l)))
                    .collect::<std::result::Result<Vec<_>, _>>()?,
            );
        }
    }
    Ok(DecoderInput {
        latents,
        depths,
        front_condition,
    })
}

/// Bilinear upsampling of each view's latent back to full resolution; the
/// decoder output is added to it when `cfg.latent_skip` is set.
pub fn latent_skip(views: &[RenderedView], cfg: &ExperimentConfig) -> Vec<Option<Tensor<f32>>> {
    views
        .iter()
        .map(|v| {
            cfg.latent_skip.then(|| {
                let low = v.color.downsample(cfg.latent_factor());
                let mut data = Vec::with_capacity(v.color.data.len());
                for c in 0..low.channels {
                    let plane: Vec<f64> = low.plane(c).iter().map(|&x| x as f64).collect();
                    data.extend(
                        upsample_bilinear(&plane, low.width, cfg.resolution)
                            .into_iter()
                            .map(|x| x as f32),
                    );
                }
                Tensor::new(&[low.channels, cfg.resolution, cfg.resolution], data).expect("sizes match")
            })
        })
        .collect()
}

/// Reads a dataset written by `cmd_render`.
pub fn load_dataset(dir: &Path) -> Result<(RenderManifest, Vec<SceneSample>)> {
    let manifest = RenderManifest::load(dir)?;
    let cams = make_rig(manifest.ortho_scale, manifest.resolution);
    let mut scenes = Vec::with_capacity(manifest.scenes.len());
    for entry in &manifest.scenes {
        let mut views = Vec::with_capacity(entry.views.len());
        for (vf, cam) in entry.views.iter().zip(&cams) {
            if vf.view != cam.view_id.name() {
                return Err(HarnessError::Dataset(format!("view {} out of rig order", vf.view)));
            }
            views.push(RenderedView {
                color: read_ppm_file(dir.join(&vf.color))?,
                depth: read_pfm_file(dir.join(&vf.depth))?,
                camera: cam.clone(),
            });
        }
        scenes.push(SceneSample {
            seed: entry.seed,
            scene: entry.scene.clone(),
            views,
        });
    }
    Ok((manifest, scenes))
}
