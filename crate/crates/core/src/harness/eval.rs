use std::path::Path;

use serde::{Deserialize, Serialize};

use super::data::{build_input, latent_skip, tensor_to_image};
use super::train::WEIGHTS_DIR;
use super::{create_dir, derive_seed, io_err, write_json, DepthSource, ExperimentConfig, HarnessError, Result};
use crate::attention::{decoder_stack, DecoderConfig};
use crate::geometry::ViewId;
use crate::imageio::Image;
use crate::metrics::{correspondence_count, level_cost, psnr, ssim, MatchView};
use crate::synthscene::{make_dataset, SceneSample};
use crate::tensorcore::ParamStore;

pub const EVAL_CSV: &str = "eval.csv";
pub const EVAL_SUMMARY: &str = "eval_summary.json";

const EVAL_NOISE_STREAM: u64 = 5;

/// One evaluated view. `corr_count` pairs the view with its next neighbour
/// in azimuth order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub variant: String,
    pub scene: usize,
    pub view: String,
    pub psnr: f64,
    pub ssim: f64,
    pub corr_count: usize,
    pub kv_floats: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub variant: String,
    pub depth_source: DepthSource,
    pub n_scenes: usize,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
    pub mean_corr_count: f64,
    /// Key/value floats per view summed over levels.
    pub kv_floats_per_view: u64,
    pub rows: Vec<EvalRow>,
}

/// Key/value floats one view reads across all decoder levels.
fn decoder_kv_floats(dcfg: &DecoderConfig) -> u64 {
    (1..=dcfg.levels)
        .map(|l| level_cost(dcfg.resolution(l), dcfg.keys_per_query(l), dcfg.d).kv_floats)
        .sum()
}

fn score(
    variant: &str,
    depth_source: DepthSource,
    scenes: &[SceneSample],
    predictions: &[Vec<Image>],
    cfg: &ExperimentConfig,
    kv_floats: u64,
) -> Result<EvalReport> {
    let matcher = cfg.matcher_config();
    let n = ViewId::ALL.len();
    let mut rows = Vec::new();
    for (k, (sample, preds)) in scenes.iter().zip(predictions).enumerate() {
        for v in 0..n {
            let next = (v + 1) % n;
            let view = &sample.views[v];
            let corr_count = correspondence_count(
                MatchView {
                    image: &preds[v],
                    camera: &view.camera,
                    mask: Some(&view.depth.valid),
                },
                MatchView {
                    image: &preds[next],
                    camera: &sample.views[next].camera,
                    mask: None,
                },
                &matcher,
            );
            rows.push(EvalRow {
                variant: variant.to_string(),
                scene: k,
                view: view.camera.view_id.name().to_string(),
                psnr: psnr(&preds[v], &view.color, 1.0)?,
                ssim: ssim(&preds[v], &view.color)?,
                corr_count,
                kv_floats,
            });
        }
    }
    let m = rows.len().max(1) as f64;
    Ok(EvalReport {
        variant: variant.to_string(),
        depth_source,
        n_scenes: scenes.len(),
        mean_psnr: rows.iter().map(|r| r.psnr).sum::<f64>() / m,
        mean_ssim: rows.iter().map(|r| r.ssim).sum::<f64>() / m,
        mean_corr_count: rows.iter().map(|r| r.corr_count as f64).sum::<f64>() / m,
        kv_floats_per_view: kv_floats,
        rows,
    })
}

fn write_report(report: &EvalReport, out_dir: &Path) -> Result<()> {
    create_dir(out_dir)?;
    let path = out_dir.join(EVAL_CSV);
    let mut w = csv::Writer::from_path(&path)?;
    for row in &report.rows {
        w.serialize(row)?;
    }
    w.flush().map_err(io_err(&path))?;
    write_json(&out_dir.join(EVAL_SUMMARY), report)
}

fn eval_scenes(cfg: &ExperimentConfig) -> Vec<SceneSample> {
    make_dataset(cfg.eval_scenes, cfg.eval_seed, cfg.resolution, cfg.ortho_scale)
}

/// Evaluates the weights in `run_dir/weights` on the held-out scenes, with
/// inference depth taken from `depth_source`.
pub fn cmd_eval(cfg: &ExperimentConfig, run_dir: &Path, depth_source: DepthSource, out_dir: &Path) -> Result<EvalReport> {
    cfg.validate()?;
    let weights_dir = run_dir.join(WEIGHTS_DIR);
    if !weights_dir.is_dir() {
        return Err(HarnessError::Io {
            path: weights_dir,
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "missing weights"),
        });
    }
    let store = ParamStore::load_dir(&weights_dir)?;
    let dcfg = cfg.decoder_config();
    let scenes = eval_scenes(cfg);
    let mut predictions = Vec::with_capacity(scenes.len());
    for (k, sample) in scenes.iter().enumerate() {
        let seed = derive_seed(cfg.eval_noise_seed, &[EVAL_NOISE_STREAM, k as u64]);
        let input = build_input(&sample.views, cfg, depth_source.noise(), seed)?;
        let outs = decoder_stack(&input, &dcfg, &store)?;
        let skips = latent_skip(&sample.views, cfg);
        predictions.push(
            outs.into_iter()
                .zip(skips)
                .map(|(mut out, skip)| {
                    if let Some(s) = skip {
                        out.data_mut().iter_mut().zip(s.data()).for_each(|(o, s)| *o += s);
                    }
                    tensor_to_image(&out)
                })
                .collect(),
        );
    }
    let report = score(
        cfg.variant.name(),
        depth_source,
        &scenes,
        &predictions,
        cfg,
        decoder_kv_floats(&dcfg),
    )?;
    write_report(&report, out_dir)?;
    Ok(report)
}

/// Scores the ground-truth renders against themselves: a sanity pass of
/// the metric pipeline, reported under the variant name `gt`.
pub fn cmd_eval_identity(cfg: &ExperimentConfig, out_dir: &Path) -> Result<EvalReport> {
    cfg.validate()?;
    let scenes = eval_scenes(cfg);
    let predictions: Vec<Vec<Image>> = scenes
        .iter()
        .map(|s| s.views.iter().map(|v| v.color.clone()).collect())
        .collect();
    let report = score("gt", DepthSource::Gt, &scenes, &predictions, cfg, 0)?;
    write_report(&report, out_dir)?;
    Ok(report)
}
