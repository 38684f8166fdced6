//! Structured multi-resolution depth noise, the per-pixel independent-noise
//! baseline, and validity-aware depth pooling for the decoder hierarchy.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::DepthMap;

#[derive(Debug, Error, PartialEq)]
pub enum DepthAugError {
    #[error("noise resolution {res} exceeds depth resolution {target}")]
    ResolutionTooHigh { res: usize, target: usize },
    #[error("noise scale must be finite and >= 0, got {0}")]
    NegativeScale(f64),
    #[error("cannot pool {from}x{from} to {to}x{to}")]
    BadPooling { from: usize, to: usize },
    #[error("depth hierarchy level must be 1..=4, got {0}")]
    BadLevel(usize),
}

/// One uniform noise field drawn at `resolution × resolution`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseTerm {
    pub resolution: usize,
    pub scale: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub terms: Vec<NoiseTerm>,
    pub seed: u64,
}

/// Coarsest noise scale; the finer terms are `S1/3` and `S1/9`.
pub const S1: f64 = 0.1;

impl NoiseSpec {
    /// `{(3, 0.1), (64, 0.1/3), (128, 0.1/9)}`.
    pub fn standard(seed: u64) -> Self {
        Self {
            terms: vec![
                NoiseTerm { resolution: 3, scale: S1 },
                NoiseTerm { resolution: 64, scale: S1 / 3.0 },
                NoiseTerm { resolution: 128, scale: S1 / 9.0 },
            ],
            seed,
        }
    }

    /// [`NoiseSpec::standard`] plus the optional full-resolution term `S1/9`.
    pub fn standard_with_fine_term(seed: u64, full_resolution: usize) -> Self {
        let mut spec = Self::standard(seed);
        spec.terms.push(NoiseTerm {
            resolution: full_resolution,
            scale: S1 / 9.0,
        });
        spec
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            terms: self.terms.clone(),
            seed,
        }
    }

    /// Caps each term's resolution at `target`, for depth maps smaller than 256.
    pub fn clamped_to(&self, target: usize) -> Self {
        Self {
            terms: self
                .terms
                .iter()
                .map(|t| NoiseTerm {
                    resolution: t.resolution.min(target),
                    scale: t.scale,
                })
                .collect(),
            seed: self.seed,
        }
    }

    pub fn total_scale(&self) -> f64 {
        self.terms.iter().map(|t| t.scale).sum()
    }

    /// Uniform half-width whose per-pixel variance matches the sum of the
    /// terms' variances (`Σ s²/3`).
    pub fn matched_independent_scale(&self) -> f64 {
        self.terms.iter().map(|t| t.scale * t.scale).sum::<f64>().sqrt()
    }

    fn validate(&self, target: usize) -> Result<(), DepthAugError> {
        for t in &self.terms {
            if t.resolution > target || t.resolution == 0 {
                return Err(DepthAugError::ResolutionTooHigh {
                    res: t.resolution,
                    target,
                });
            }
            if !(t.scale >= 0.0) || !t.scale.is_finite() {
                return Err(DepthAugError::NegativeScale(t.scale));
            }
        }
        Ok(())
    }
}

/// Bilinear resize of a square `src_res²` field to `dst_res²` with
/// pixel-centre alignment and edge clamping. Each output is a convex
/// combination of inputs, so `max |out| ≤ max |in|`.
pub fn upsample_bilinear(src: &[f64], src_res: usize, dst_res: usize) -> Vec<f64> {
    let ratio = src_res as f64 / dst_res as f64;
    let coord = |x: usize| {
        let s = ((x as f64 + 0.5) * ratio - 0.5).clamp(0.0, (src_res - 1) as f64);
        let i0 = s.floor() as usize;
        let i1 = (i0 + 1).min(src_res - 1);
        (i0, i1, s - i0 as f64)
    };
    let axis: Vec<(usize, usize, f64)> = (0..dst_res).map(coord).collect();
    let mut out = Vec::with_capacity(dst_res * dst_res);
    for &(y0, y1, fy) in &axis {
        for &(x0, x1, fx) in &axis {
            let top = src[y0 * src_res + x0] * (1.0 - fx) + src[y0 * src_res + x1] * fx;
            let bot = src[y1 * src_res + x0] * (1.0 - fx) + src[y1 * src_res + x1] * fx;
            out.push(top * (1.0 - fy) + bot * fy);
        }
    }
    out
}

/// The summed, upsampled noise field `Σ Upsample(Z_i)` for a square map of side `target`.
pub fn structured_field(spec: &NoiseSpec, target: usize) -> Result<Vec<f64>, DepthAugError> {
    spec.validate(target)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut total = vec![0.0; target * target];
    for term in &spec.terms {
        let n = term.resolution * term.resolution;
        let coarse: Vec<f64> = (0..n)
            .map(|_| {
                if term.scale > 0.0 {
                    rng.gen_range(-term.scale..=term.scale)
                } else {
                    0.0
                }
            })
            .collect();
        let fine = upsample_bilinear(&coarse, term.resolution, target);
        total.iter_mut().zip(&fine).for_each(|(t, f)| *t += f);
    }
    Ok(total)
}

/// `D′ = D + Σ Upsample(Z_i)`, `Z_i ~ U(−s_i, s_i)` at each term's resolution.
/// The validity mask is unchanged and invalid pixels keep their values.
pub fn structured_noise(depth: &DepthMap, spec: &NoiseSpec) -> Result<DepthMap, DepthAugError> {
    assert_eq!(depth.width, depth.height, "square depth maps only");
    let field = structured_field(spec, depth.width)?;
    Ok(apply_field(depth, &field))
}

/// Per-pixel i.i.d. `U(−scale, scale)` noise on valid pixels.
pub fn independent_noise(depth: &DepthMap, scale: f64, seed: u64) -> Result<DepthMap, DepthAugError> {
    if !(scale >= 0.0) || !scale.is_finite() {
        return Err(DepthAugError::NegativeScale(scale));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let field: Vec<f64> = (0..depth.values.len())
        .map(|_| {
            if scale > 0.0 {
                rng.gen_range(-scale..=scale)
            } else {
                0.0
            }
        })
        .collect();
    Ok(apply_field(depth, &field))
}

fn apply_field(depth: &DepthMap, field: &[f64]) -> DepthMap {
    let mut out = depth.clone();
    for ((v, &ok), f) in out.values.iter_mut().zip(&depth.valid).zip(field) {
        if ok {
            *v = (*v as f64 + f) as f32;
        }
    }
    out
}

/// Pools a 256² map to level `level`: 1 → 32, 2 → 64, 3 → 128, 4 → 256.
pub fn pool_depth(depth: &DepthMap, level: usize) -> Result<DepthMap, DepthAugError> {
    if !(1..=4).contains(&level) {
        return Err(DepthAugError::BadLevel(level));
    }
    pool_depth_to(depth, 32 << (level - 1))
}

/// Average pooling over valid pixels in each block; blocks with no valid
/// pixel become invalid.
pub fn pool_depth_to(depth: &DepthMap, target: usize) -> Result<DepthMap, DepthAugError> {
    let from = depth.width;
    if target == 0 || target > from || from % target != 0 || depth.height != from {
        return Err(DepthAugError::BadPooling { from, to: target });
    }
    if target == from {
        return Ok(depth.clone());
    }
    let f = from / target;
    let mut out = DepthMap::new(target, target);
    for by in 0..target {
        for bx in 0..target {
            let (mut acc, mut n) = (0.0f64, 0usize);
            for y in by * f..(by + 1) * f {
                for x in bx * f..(bx + 1) * f {
                    if let Some(v) = depth.get(x, y) {
                        acc += v;
                        n += 1;
                    }
                }
            }
            out.set(bx, by, (n > 0).then(|| (acc / n as f64) as f32));
        }
    }
    Ok(out)
}

/// Block means of a square `side²` field over an `n × n` partition whose
/// block edges sit at `round(i · side / n)`.
pub fn block_means(field: &[f64], side: usize, n: usize) -> Vec<f64> {
    let edge = |i: usize| ((i * side) as f64 / n as f64).round() as usize;
    let mut out = Vec::with_capacity(n * n);
    for by in 0..n {
        for bx in 0..n {
            let (mut acc, mut count) = (0.0, 0usize);
            for y in edge(by)..edge(by + 1) {
                for x in edge(bx)..edge(bx + 1) {
                    acc += field[y * side + x];
                    count += 1;
                }
            }
            out.push(acc / count as f64);
        }
    }
    out
}
