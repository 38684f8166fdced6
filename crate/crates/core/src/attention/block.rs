use std::rc::Rc;

use rand_chacha::ChaCha8Rng;

use super::{contract, AttentionConfig, AttentionError, AttentionParams, AttentionWeights, FeatureMap, MultiViewSet};
use crate::geometry::{plucker, stratified_in, stratified_offsets, Camera, DepthMap, Ray, Vec2, Vec3, ViewId};
use crate::tensorcore::{mlp2, GatherLayout, GatherPlan, Scalar, Tap, Tape, Tensor, Var};

/// Where the keys of each query pixel come from.
#[derive(Clone, Copy, Debug)]
pub enum KeySampling<'a> {
    /// `n_p` stratum midpoints within `±r` of the depth-lifted pixel.
    Truncated { depth: &'a DepthMap, n_p: usize, r: f64 },
    /// `n` stratum midpoints over absolute reference depths `z_range`.
    Line { z_range: (f64, f64), n: usize },
}

impl KeySampling<'_> {
    pub fn keys_per_query(&self) -> usize {
        match self {
            KeySampling::Truncated { n_p, .. } => *n_p,
            KeySampling::Line { n, .. } => *n,
        }
    }

    fn offsets(&self) -> Result<Vec<f64>, AttentionError> {
        Ok(match *self {
            KeySampling::Truncated { n_p, r, .. } => stratified_offsets(n_p, r, None::<&mut ChaCha8Rng>)?,
            KeySampling::Line { z_range, n } => stratified_in(n, z_range.0, z_range.1, None::<&mut ChaCha8Rng>)?,
        })
    }

    /// Reference depth the offsets are added to, or `None` for a pass-through pixel.
    fn base(&self, x: usize, y: usize) -> Option<f64> {
        match self {
            KeySampling::Truncated { depth, .. } => depth.get(x, y),
            KeySampling::Line { .. } => Some(0.0),
        }
    }
}

/// Read taps for a sub-pixel position in a `width × height` map, or `None`
/// outside `[0, W−1] × [0, H−1]`.
pub fn bilinear_taps<T: Scalar>(width: usize, height: usize, uv: Vec2, nearest: bool) -> Option<[Tap<T>; 4]> {
    let inside = uv.x >= 0.0 && uv.y >= 0.0 && uv.x <= (width - 1) as f64 && uv.y <= (height - 1) as f64;
    if !inside {
        return None;
    }
    let tap = |x: usize, y: usize, w: f64| Tap {
        index: (y * width + x) as u32,
        weight: T::of(w),
    };
    if nearest {
        let (x, y) = (uv.x.round() as usize, uv.y.round() as usize);
        return Some([tap(x, y, 1.0), Tap::none(), Tap::none(), Tap::none()]);
    }
    let (x0, y0) = (uv.x.floor() as usize, uv.y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(width - 1), (y0 + 1).min(height - 1));
    let (fx, fy) = (uv.x - x0 as f64, uv.y - y0 as f64);
    Some([
        tap(x0, y0, (1.0 - fx) * (1.0 - fy)),
        tap(x1, y0, fx * (1.0 - fy)),
        tap(x0, y1, (1.0 - fx) * fy),
        tap(x1, y1, fx * fy),
    ])
}

/// Bilinear read of a feature vector at `uv`; zeros and `false` out of bounds.
pub fn bilinear_sample<T: Scalar>(fm: &FeatureMap<T>, uv: Vec2) -> (Tensor<T>, bool) {
    let (d, n) = (fm.channels(), fm.resolution());
    let mut out = vec![T::zero(); d];
    let Some(taps) = bilinear_taps::<T>(n, n, uv, false) else {
        return (Tensor::zeros(&[d]), false);
    };
    let src = fm.data.data();
    for tap in taps {
        for (c, o) in out.iter_mut().enumerate() {
            *o = *o + tap.weight * src[c * n * n + tap.index as usize];
        }
    }
    (Tensor::new(&[d], out).expect("length d"), true)
}

/// Cross-view aggregate of one sample point: the two-layer MLP over the
/// concatenated per-view features (rig order, reference excluded), each
/// followed by its Plücker code when enabled. Out-of-bounds views
/// contribute zeros.
pub fn aggregate_views<T: Scalar>(
    per_view_feats: &[Tensor<T>],
    in_bounds: &[bool],
    plucker_codes: Option<&[[f64; 6]]>,
    weights: &AttentionWeights<T>,
    cfg: &AttentionConfig,
) -> Result<Tensor<T>, AttentionError> {
    let n_views = per_view_feats.len();
    if in_bounds.len() != n_views || plucker_codes.is_some_and(|p| p.len() != n_views) {
        return Err(contract("per-view inputs disagree in length"));
    }
    if plucker_codes.is_some() != cfg.use_plucker {
        return Err(contract("Plücker codes given iff use_plucker is set"));
    }
    weights.check(cfg, n_views)?;
    let mut row = Vec::with_capacity(cfg.mlp_input_width(n_views));
    for (j, f) in per_view_feats.iter().enumerate() {
        if f.shape() != [cfg.d] {
            return Err(contract(format!("view feature shape {:?}, expected [{}]", f.shape(), cfg.d)));
        }
        let keep = in_bounds[j];
        row.extend(f.data().iter().map(|&v| if keep { v } else { T::zero() }));
        if let Some(codes) = plucker_codes {
            row.extend(codes[j].iter().map(|&v| if keep { T::of(v) } else { T::zero() }));
        }
    }
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::new(&[row.len()], row)?);
    let p = weights.register(&mut tape, false);
    let y = mlp2(&mut tape, x, p.w1, p.b1, p.w2, p.b2)?;
    Ok(tape.value(y).clone())
}

/// Handles produced by one attention block on a tape.
#[derive(Clone, Debug)]
pub struct AttentionTrace {
    /// Output features `[d × H × W]`.
    pub out: Var,
    /// Attention weights `[HW × 1 × keys]`.
    pub probs: Var,
    /// Pixels returned unchanged because their depth is invalid.
    pub passthrough: Vec<bool>,
}

fn ray_code(point: Vec3, cam: &Camera) -> Result<[f64; 6], AttentionError> {
    Ok(plucker(&Ray::new(point, cam.axis())?)?)
}

/// Attention for one reference view, recorded on `tape`.
///
/// `features[v]` is view `v`'s `[d × H × W]` map and `cameras[v]` its
/// camera at that resolution. Keys and values come from every other view
/// in the given order.
pub fn attention_on_tape<T: Scalar>(
    tape: &mut Tape<T>,
    features: &[Var],
    cameras: &[Camera],
    ref_idx: usize,
    sampling: &KeySampling,
    cfg: &AttentionConfig,
    params: &AttentionParams,
) -> Result<AttentionTrace, AttentionError> {
    cfg.validate()?;
    if features.len() != cameras.len() || features.len() < 2 || ref_idx >= features.len() {
        return Err(contract(format!(
            "{} feature maps, {} cameras, reference {ref_idx}",
            features.len(),
            cameras.len()
        )));
    }
    let cam_ref = &cameras[ref_idx];
    let (w, h, d) = (cam_ref.width, cam_ref.height, cfg.d);
    for (f, cam) in features.iter().zip(cameras) {
        if tape.shape(*f) != [d, h, w] || cam.width != w || cam.height != h {
            return Err(contract(format!(
                "feature map {:?} does not match [{d}, {h}, {w}]",
                tape.shape(*f)
            )));
        }
    }
    if let KeySampling::Truncated { depth, .. } = sampling {
        if depth.width != w || depth.height != h {
            return Err(contract(format!(
                "depth {}x{} at feature resolution {w}x{h}",
                depth.width, depth.height
            )));
        }
    }

    let n = w * h;
    let keys = sampling.keys_per_query();
    let offsets = sampling.offsets()?;
    let others: Vec<usize> = (0..features.len()).filter(|&j| j != ref_idx).collect();
    let mut plans: Vec<GatherPlan<T>> = others
        .iter()
        .map(|_| GatherPlan::new(n, d, GatherLayout::ChannelMajor))
        .collect();
    let mut codes: Vec<Vec<T>> = if cfg.use_plucker {
        others.iter().map(|_| Vec::with_capacity(n * keys * 6)).collect()
    } else {
        Vec::new()
    };
    let mut passthrough = vec![false; n];
    let axis = cam_ref.axis();

    for y in 0..h {
        for x in 0..w {
            let Some(base) = sampling.base(x, y) else {
                passthrough[y * w + x] = true;
                for (slot, plan) in plans.iter_mut().enumerate() {
                    for _ in 0..keys {
                        plan.push_empty();
                    }
                    if cfg.use_plucker {
                        codes[slot].extend(std::iter::repeat(T::zero()).take(keys * 6));
                    }
                }
                continue;
            };
            let anchor = cam_ref.unproject(Vec2::new(x as f64, y as f64), base)?;
            for &t in &offsets {
                let point = anchor + axis * t;
                for (slot, &j) in others.iter().enumerate() {
                    let (uv, _) = cameras[j].project(&point);
                    let taps = bilinear_taps(w, h, uv, cfg.nearest);
                    match taps {
                        Some(taps) => plans[slot].push(taps),
                        None => plans[slot].push_empty(),
                    }
                    if cfg.use_plucker {
                        match taps {
                            Some(_) => codes[slot].extend(ray_code(point, &cameras[j])?.iter().map(|&v| T::of(v))),
                            None => codes[slot].extend(std::iter::repeat(T::zero()).take(6)),
                        }
                    }
                }
            }
        }
    }

    let mut blocks = Vec::with_capacity(others.len());
    for (slot, plan) in plans.into_iter().enumerate() {
        let g = tape.gather(features[others[slot]], Rc::new(plan))?;
        if cfg.use_plucker {
            let c = tape.constant(Tensor::new(&[n * keys, 6], std::mem::take(&mut codes[slot]))?);
            blocks.push(tape.concat(&[g, c], 1)?);
        } else {
            blocks.push(g);
        }
    }
    let x = tape.concat(&blocks, 1)?;
    let f_mv = mlp2(tape, x, params.w1, params.b1, params.w2, params.b2)?;

    let f_ref = tape.reshape(features[ref_idx], &[d, n])?;
    let f_ref = tape.transpose(f_ref)?;
    let q = tape.matmul_nt(f_ref, params.w_q)?;
    let k = tape.matmul_nt(f_mv, params.w_k)?;
    let v = tape.matmul_nt(f_mv, params.w_v)?;
    let q = tape.reshape(q, &[n, 1, d])?;
    let k = tape.reshape(k, &[n, keys, d])?;
    let v = tape.reshape(v, &[n, keys, d])?;
    let scores = tape.batch_matmul(q, k, true)?;
    let scores = tape.scale(scores, 1.0 / (d as f64).sqrt());
    let probs = tape.softmax(scores)?;
    let att = tape.batch_matmul(probs, v, false)?;
    let mut att = tape.reshape(att, &[n, d])?;

    let any_pass = passthrough.iter().any(|&p| p);
    if any_pass {
        att = tape.gather(att, Rc::new(row_mask(n, d, &passthrough, false)))?;
    }
    let rows = if cfg.residual {
        tape.add(att, f_ref)?
    } else if any_pass {
        let kept = tape.gather(f_ref, Rc::new(row_mask(n, d, &passthrough, true)))?;
        tape.add(att, kept)?
    } else {
        att
    };
    let out = tape.transpose(rows)?;
    let out = tape.reshape(out, &[d, h, w])?;
    Ok(AttentionTrace { out, probs, passthrough })
}

/// Row selector over `[n × d]`: keeps rows whose flag equals `keep_flagged`.
fn row_mask<T: Scalar>(n: usize, d: usize, flags: &[bool], keep_flagged: bool) -> GatherPlan<T> {
    let mut plan = GatherPlan::new(n, d, GatherLayout::PositionMajor);
    for (i, &f) in flags.iter().enumerate() {
        if f == keep_flagged {
            plan.push_single(i);
        } else {
            plan.push_empty();
        }
    }
    plan
}

/// Result of a value-level attention call.
#[derive(Clone, Debug)]
pub struct AttentionOutput<T: Scalar = f32> {
    pub features: FeatureMap<T>,
    pub passthrough: Vec<bool>,
}

fn run_block<T: Scalar>(
    mvset: &MultiViewSet<T>,
    ref_view: ViewId,
    sampling: &KeySampling,
    cfg: &AttentionConfig,
    weights: &AttentionWeights<T>,
) -> Result<AttentionOutput<T>, AttentionError> {
    weights.check(cfg, mvset.features.len() - 1)?;
    let ref_idx = mvset.index_of(ref_view)?;
    let mut tape = Tape::new();
    let feats: Vec<Var> = mvset.features.iter().map(|f| tape.constant(f.data.clone())).collect();
    let params = weights.register(&mut tape, false);
    let trace = attention_on_tape(&mut tape, &feats, &mvset.cameras, ref_idx, sampling, cfg, &params)?;
    let level = mvset.features[ref_idx].level;
    Ok(AttentionOutput {
        features: FeatureMap::new(tape.value(trace.out).clone(), ref_view, level)?,
        passthrough: trace.passthrough,
    })
}

/// Attention whose keys are `cfg.n_p` points within `±cfg.r` of each
/// pixel's depth. Pixels with invalid depth pass through unchanged.
pub fn truncated_epipolar_attention<T: Scalar>(
    mvset: &MultiViewSet<T>,
    ref_view: ViewId,
    depth: &DepthMap,
    cfg: &AttentionConfig,
    weights: &AttentionWeights<T>,
) -> Result<AttentionOutput<T>, AttentionError> {
    let sampling = KeySampling::Truncated {
        depth,
        n_p: cfg.n_p,
        r: cfg.r,
    };
    run_block(mvset, ref_view, &sampling, cfg, weights)
}

/// Attention whose keys are `n_line_samples` points spread over the whole
/// reference depth range `z_range`, independent of any depth estimate.
pub fn full_epipolar_attention<T: Scalar>(
    mvset: &MultiViewSet<T>,
    ref_view: ViewId,
    z_range: (f64, f64),
    n_line_samples: usize,
    cfg: &AttentionConfig,
    weights: &AttentionWeights<T>,
) -> Result<AttentionOutput<T>, AttentionError> {
    if n_line_samples < 2 {
        return Err(contract(format!("n_line_samples = {n_line_samples}, need ≥ 2")));
    }
    let sampling = KeySampling::Line {
        z_range,
        n: n_line_samples,
    };
    run_block(mvset, ref_view, &sampling, cfg, weights)
}
