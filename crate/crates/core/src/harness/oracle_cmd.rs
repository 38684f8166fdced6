use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Result;
use crate::attention::{
    attention_on_tape, truncated_epipolar_attention, AttentionConfig, AttentionParams, AttentionWeights, FeatureMap,
    KeySampling, MultiViewSet,
};
use crate::geometry::{make_rig, Camera, DepthMap, ViewId};
use crate::imageio::Image;
use crate::metrics::{psnr, ssim};
use crate::oracle::{
    brute_force_attention, brute_force_correspondences, check_gradients, naive_psnr, naive_ssim, worst_rel_err,
};
use crate::synthscene::{gt_correspondences, random_scene, render};
use crate::tensorcore::{Tensor, TensorError};

/// Outcome of one fast-path versus reference comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleCheck {
    pub name: String,
    pub cases: usize,
    /// Worst observed error (or shortfall) across cases.
    pub worst: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl OracleCheck {
    fn new(name: &str, cases: usize, worst: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            cases,
            worst,
            tolerance,
            pass: worst < tolerance,
        }
    }
}

const VIEWS: [ViewId; 4] = [ViewId::Front, ViewId::FrontRight, ViewId::Right, ViewId::FrontLeft];

struct Instance {
    cams: Vec<Camera>,
    feats: Vec<Tensor<f64>>,
    cfg: AttentionConfig,
    weights: AttentionWeights<f64>,
    depth: DepthMap,
}

fn instance(seed: u64, res: usize, d: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rig = make_rig(1.0, res);
    let cams: Vec<Camera> = VIEWS.iter().map(|v| rig[v.index()].clone()).collect();
    let feats = cams
        .iter()
        .map(|_| Tensor::from_fn(&[d, res, res], |_| rng.gen_range(-1.0..1.0)))
        .collect();
    let cfg = AttentionConfig {
        n_p: 7,
        d,
        use_plucker: seed % 2 == 0,
        residual: seed % 3 != 0,
        ..AttentionConfig::default()
    };
    let mut weights = AttentionWeights::init(&cfg, cams.len() - 1, &mut rng);
    // Keep hidden units away from the rectifier kink for finite differences.
    for (i, b) in weights.b1.data_mut().iter_mut().enumerate() {
        *b = if i % 3 == 2 { -2.0 } else { 2.0 };
    }
    weights.w1.data_mut().iter_mut().for_each(|v| *v *= 0.1);
    let mut depth = DepthMap::new(res, res);
    for y in 0..res {
        for x in 0..res {
            if !rng.gen_bool(0.15) {
                depth.set(x, y, Some(rng.gen_range(1.2..1.8)));
            }
        }
    }
    Instance {
        cams,
        feats,
        cfg,
        weights,
        depth,
    }
}

fn attention_forward(seeds: u64) -> Result<OracleCheck> {
    let mut worst = 0.0f64;
    for seed in 0..seeds {
        let inst = instance(seed, 8, 4);
        let fms = inst
            .feats
            .iter()
            .zip(&inst.cams)
            .map(|(f, c)| FeatureMap::new(f.clone(), c.view_id, 1))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let set = MultiViewSet::new(inst.cams.clone(), fms)?;
        let ref_idx = (seed % 4) as usize;
        let fast = truncated_epipolar_attention(&set, VIEWS[ref_idx], &inst.depth, &inst.cfg, &inst.weights)?;
        let (n_p, r) = (inst.cfg.n_p, inst.cfg.r);
        let keys = |x: usize, y: usize| {
            inst.depth
                .get(x, y)
                .map(|z| (0..n_p).map(|k| z - r + 2.0 * r * (2 * k + 1) as f64 / (2 * n_p) as f64).collect())
        };
        let slow = brute_force_attention(&inst.feats, &inst.cams, ref_idx, &keys, &inst.cfg, &inst.weights);
        for (a, b) in fast.features.data.data().iter().zip(&slow) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok(OracleCheck::new("attention_forward_vs_brute_force", seeds as usize, worst, 1e-5))
}

fn attention_gradients(seeds: u64) -> Result<OracleCheck> {
    let mut worst = 0.0f64;
    for seed in 0..seeds {
        let inst = instance(1000 + seed, 4, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + seed);
        let target = Tensor::from_fn(&[3, 4, 4], |_| rng.gen_range(-1.0..1.0));
        let mut inputs = inst.feats.clone();
        inputs.extend(inst.weights.tensors().into_iter().cloned());
        inputs.push(target);
        let mut check = vec![true; inputs.len()];
        *check.last_mut().expect("non-empty") = false;
        let ref_idx = (seed % 4) as usize;
        let res = check_gradients(&inputs, &check, |tape, v| {
            let p = AttentionParams {
                w_q: v[4],
                w_k: v[5],
                w_v: v[6],
                w1: v[7],
                b1: v[8],
                w2: v[9],
                b2: v[10],
            };
            let sampling = KeySampling::Truncated {
                depth: &inst.depth,
                n_p: inst.cfg.n_p,
                r: inst.cfg.r,
            };
            let out = attention_on_tape(tape, &v[..4], &inst.cams, ref_idx, &sampling, &inst.cfg, &p)
                .map_err(|e| TensorError::Format(e.to_string()))?
                .out;
            tape.mse(out, v[11])
        })?;
        worst = worst.max(worst_rel_err(&res));
    }
    Ok(OracleCheck::new("attention_gradient_vs_finite_differences", seeds as usize, worst, 1e-4))
}

fn image_metrics(seeds: u64) -> Result<Vec<OracleCheck>> {
    let (mut wp, mut ws) = (0.0f64, 0.0f64);
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(3000 + seed);
        let mut img = || Image::from_data(3, 24, 24, (0..3 * 24 * 24).map(|_| rng.gen::<f32>()).collect());
        let (a, b) = (img(), img());
        wp = wp.max((psnr(&a, &b, 1.0)? - naive_psnr(&a, &b, 1.0)).abs());
        ws = ws.max((ssim(&a, &b)? - naive_ssim(&a, &b)).abs());
    }
    Ok(vec![
        OracleCheck::new("psnr_vs_two_loop", seeds as usize, wp, 1e-9),
        OracleCheck::new("ssim_vs_sliding_window", seeds as usize, ws, 1e-6),
    ])
}

/// Fraction of depth-map correspondences not confirmed by ray casting.
fn correspondences(seeds: u64) -> OracleCheck {
    let cams = make_rig(1.0, 32);
    let mut worst = 0.0f64;
    for seed in 0..seeds {
        let scene = random_scene(seed);
        let a = render(&scene, &cams[ViewId::Front.index()], 32);
        let b = render(&scene, &cams[ViewId::FrontRight.index()], 32);
        let fast = gt_correspondences(&a, &b);
        if fast.is_empty() {
            continue;
        }
        let slow: std::collections::HashSet<_> = brute_force_correspondences(&scene, &a, &b).into_iter().collect();
        let confirmed = fast.iter().filter(|p| slow.contains(p)).count();
        worst = worst.max(1.0 - confirmed as f64 / fast.len() as f64);
    }
    OracleCheck::new("correspondences_vs_ray_casting", seeds as usize, worst, 0.05)
}

/// Runs every fast-path cross-check over `seeds` random cases each.
pub fn cmd_oracle(seeds: u64) -> Result<Vec<OracleCheck>> {
    let mut out = vec![attention_forward(seeds)?, attention_gradients(seeds)?];
    out.extend(image_metrics(seeds)?);
    out.push(correspondences(seeds));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_check_passes_on_a_few_seeds() {
        for check in cmd_oracle(3).unwrap() {
            assert!(check.pass, "{check:?}");
        }
    }
}
