use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::{build_input, image_to_tensor, latent_skip, load_dataset};
use super::{create_dir, derive_seed, write_json, ExperimentConfig, HarnessError, Result};
use crate::attention::{decoder_forward, init_decoder_weights, register_store, DecoderConfig, DecoderInput};
use crate::synthscene::{make_dataset, RenderedView};
use crate::tensorcore::{ParamStore, Tape, Tensor};

pub const WEIGHTS_DIR: &str = "weights";
pub const TRAIN_LOG: &str = "train_log.csv";
pub const RUN_RECORD: &str = "run_record.json";

/// Stream tags keeping the seeds of different consumers apart.
const SHUFFLE_STREAM: u64 = 1;
const TRAIN_NOISE_STREAM: u64 = 2;
const VAL_SCENE_STREAM: u64 = 3;
const VAL_NOISE_STREAM: u64 = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: ExperimentConfig,
    pub epochs: Vec<EpochLoss>,
    pub final_train_loss: Option<f64>,
    pub final_val_loss: Option<f64>,
    pub wall_clock_s: f64,
    pub dataset_seed: u64,
    pub train_seed: u64,
    pub init_seed: u64,
    pub diverged: Option<String>,
}

/// Mean over views of the per-view MSE, with gradients for every trainable
/// parameter the mode actually uses.
pub(crate) fn scene_loss(
    store: &ParamStore,
    input: &DecoderInput<f32>,
    skip: &[Option<Tensor<f32>>],
    targets: &[Tensor<f32>],
    dcfg: &DecoderConfig,
    with_grads: bool,
) -> Result<(f64, BTreeMap<String, Vec<f32>>)> {
    let mut tape = Tape::<f32>::new();
    let vars = register_store(&mut tape, store, with_grads);
    let outs = decoder_forward(&mut tape, input, dcfg, &vars)?;
    let mut total = None;
    for ((&out, target), skip) in outs.iter().zip(targets).zip(skip) {
        let out = match skip {
            Some(s) => {
                let s = tape.constant(s.clone());
                tape.add(out, s)?
            }
            None => out,
        };
        let t = tape.constant(target.clone());
        let l = tape.mse(out, t)?;
        total = Some(match total {
            None => l,
            Some(acc) => tape.add(acc, l)?,
        });
    }
    let loss = tape.scale(total.expect("at least one view"), 1.0 / outs.len() as f64);
    let value = tape.value(loss).data()[0] as f64;
    let mut grads = BTreeMap::new();
    if with_grads && value.is_finite() {
        tape.backward(loss)?;
        for (name, var) in &vars {
            if let Some(g) = tape.grad(*var) {
                grads.insert(name.clone(), g.to_vec());
            }
        }
    }
    Ok((value, grads))
}

pub(crate) fn targets(views: &[RenderedView]) -> Vec<Tensor<f32>> {
    views.iter().map(|v| image_to_tensor(&v.color)).collect()
}

fn write_log(path: &Path, epochs: &[EpochLoss]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for e in epochs {
        w.serialize(e)?;
    }
    w.flush().map_err(super::io_err(path))?;
    Ok(())
}

/// Trains the decoder of `cfg.variant` on the dataset in `data_dir` with
/// fixed-step mini-batch gradient descent on the MSE, writing weights, a
/// per-epoch loss log and a run record to `out_dir`.
pub fn cmd_train(cfg: &ExperimentConfig, data_dir: &Path, out_dir: &Path) -> Result<RunRecord> {
    cfg.validate()?;
    let start = Instant::now();
    let (manifest, scenes) = load_dataset(data_dir)?;
    if manifest.resolution != cfg.resolution || manifest.ortho_scale != cfg.ortho_scale {
        return Err(HarnessError::Dataset(format!(
            "dataset is {}² at ortho {}, config wants {}² at {}",
            manifest.resolution, manifest.ortho_scale, cfg.resolution, cfg.ortho_scale
        )));
    }
    create_dir(out_dir)?;
    let dcfg = cfg.decoder_config();
    let wiring = cfg.variant.wiring();
    let mut store = init_decoder_weights(&dcfg, cfg.init_seed);
    if cfg.latent_skip {
        store.insert("head.b", Tensor::zeros(&[dcfg.out_channels]));
    }

    let val = make_dataset(
        cfg.val_scenes,
        derive_seed(cfg.eval_seed, &[VAL_SCENE_STREAM]),
        cfg.resolution,
        cfg.ortho_scale,
    );
    let val_inputs = val
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let seed = derive_seed(cfg.eval_noise_seed, &[VAL_NOISE_STREAM, k as u64]);
            let input = build_input(&s.views, cfg, cfg.eval_depth_source.noise(), seed)?;
            Ok((input, latent_skip(&s.views, cfg), targets(&s.views)))
        })
        .collect::<Result<Vec<_>>>()?;
    let scene_targets: Vec<_> = scenes.iter().map(|s| targets(&s.views)).collect();
    let scene_skips: Vec<_> = scenes.iter().map(|s| latent_skip(&s.views, cfg)).collect();

    let mut record = RunRecord {
        config: cfg.clone(),
        epochs: Vec::new(),
        final_train_loss: None,
        final_val_loss: None,
        wall_clock_s: 0.0,
        dataset_seed: cfg.dataset_seed,
        train_seed: cfg.train_seed,
        init_seed: cfg.init_seed,
        diverged: None,
    };
    let lr = cfg.learning_rate as f32;
    let mu = cfg.momentum as f32;
    let mut velocity: BTreeMap<String, Vec<f32>> = BTreeMap::new();
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..scenes.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(
            cfg.train_seed,
            &[SHUFFLE_STREAM, epoch as u64],
        )));
        let mut epoch_loss = 0.0;
        for (batch_idx, batch) in order.chunks(cfg.batch_size).enumerate() {
            let mut acc: BTreeMap<String, Vec<f32>> = BTreeMap::new();
            for &k in batch {
                let seed = derive_seed(cfg.train_seed, &[TRAIN_NOISE_STREAM, epoch as u64, k as u64]);
                let input = build_input(&scenes[k].views, cfg, wiring.train_noise, seed)?;
                let (loss, grads) = scene_loss(&store, &input, &scene_skips[k], &scene_targets[k], &dcfg, true)?;
                if !loss.is_finite() {
                    record.diverged = Some(format!("epoch {epoch}, batch {batch_idx}, scene {k}: loss {loss}"));
                    record.wall_clock_s = start.elapsed().as_secs_f64();
                    write_json(&out_dir.join(RUN_RECORD), &record)?;
                    return Err(HarnessError::Diverged {
                        epoch,
                        batch: batch_idx,
                        loss,
                    });
                }
                epoch_loss += loss;
                for (name, g) in grads {
                    match acc.get_mut(&name) {
                        Some(a) => a.iter_mut().zip(&g).for_each(|(a, g)| *a += g),
                        None => {
                            acc.insert(name, g);
                        }
                    }
                }
            }
            let inv = 1.0 / batch.len() as f32;
            for (name, t) in store.iter_mut() {
                let Some(g) = acc.get(name) else { continue };
                let v = velocity.entry(name.clone()).or_insert_with(|| vec![0.0; g.len()]);
                for ((w, v), g) in t.data_mut().iter_mut().zip(v.iter_mut()).zip(g) {
                    *v = mu * *v + g * inv;
                    *w -= lr * *v;
                }
            }
        }
        let mut val_loss = 0.0;
        for (input, skip, target) in &val_inputs {
            val_loss += scene_loss(&store, input, skip, target, &dcfg, false)?.0;
        }
        record.epochs.push(EpochLoss {
            epoch,
            train_loss: epoch_loss / scenes.len() as f64,
            val_loss: val_loss / val_inputs.len().max(1) as f64,
        });
    }
    record.final_train_loss = record.epochs.last().map(|e| e.train_loss);
    record.final_val_loss = record.epochs.last().map(|e| e.val_loss);

    store.save_dir(out_dir.join(WEIGHTS_DIR))?;
    write_log(&out_dir.join(TRAIN_LOG), &record.epochs)?;
    record.wall_clock_s = start.elapsed().as_secs_f64();
    write_json(&out_dir.join(RUN_RECORD), &record)?;
    Ok(record)
}
