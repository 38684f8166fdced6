use crate::attention::{AttentionConfig, AttentionWeights};
use crate::geometry::{Camera, Vec2};
use crate::tensorcore::Tensor;

use super::direct_softmax;

fn read_feature(map: &Tensor<f64>, uv: Vec2, nearest: bool) -> Option<Vec<f64>> {
    let (d, h, w) = (map.shape()[0], map.shape()[1], map.shape()[2]);
    if !(uv.x >= 0.0 && uv.y >= 0.0 && uv.x <= (w - 1) as f64 && uv.y <= (h - 1) as f64) {
        return None;
    }
    let mut out = vec![0.0; d];
    if nearest {
        let (x, y) = (uv.x.round() as usize, uv.y.round() as usize);
        for (c, o) in out.iter_mut().enumerate() {
            *o = map.at(&[c, y, x]);
        }
        return Some(out);
    }
    let (x0, y0) = (uv.x.floor() as usize, uv.y.floor() as usize);
    let (fx, fy) = (uv.x - x0 as f64, uv.y - y0 as f64);
    for (c, o) in out.iter_mut().enumerate() {
        for (dy, wy) in [(0, 1.0 - fy), (1, fy)] {
            for (dx, wx) in [(0, 1.0 - fx), (1, fx)] {
                if wx * wy == 0.0 {
                    continue;
                }
                *o += wx * wy * map.at(&[c, (y0 + dy).min(h - 1), (x0 + dx).min(w - 1)]);
            }
        }
    }
    Some(out)
}

fn mat_vec(m: &Tensor<f64>, x: &[f64]) -> Vec<f64> {
    let (rows, cols) = (m.shape()[0], m.shape()[1]);
    (0..rows)
        .map(|i| (0..cols).map(|j| m.at(&[i, j]) * x[j]).sum())
        .collect()
}

/// Per-pixel scalar-loop evaluation of one attention block.
///
/// `key_depths(x, y)` gives the absolute reference-camera depths of the
/// pixel's keys, or `None` to pass the pixel through. Returns `[d × H × W]`.
pub fn brute_force_attention(
    features: &[Tensor<f64>],
    cameras: &[Camera],
    ref_idx: usize,
    key_depths: &dyn Fn(usize, usize) -> Option<Vec<f64>>,
    cfg: &AttentionConfig,
    weights: &AttentionWeights<f64>,
) -> Vec<f64> {
    let fr = &features[ref_idx];
    let (d, h, w) = (fr.shape()[0], fr.shape()[1], fr.shape()[2]);
    let cam_ref = &cameras[ref_idx];
    let mut out = vec![0.0; d * h * w];
    for y in 0..h {
        for x in 0..w {
            let f_ref: Vec<f64> = (0..d).map(|c| fr.at(&[c, y, x])).collect();
            let result = match key_depths(x, y) {
                None => f_ref.clone(),
                Some(depths) => {
                    let mut keys = Vec::new();
                    let mut values = Vec::new();
                    for z in depths {
                        let point = cam_ref.unproject(Vec2::new(x as f64, y as f64), z).unwrap();
                        let mut row = Vec::new();
                        for (j, cam) in cameras.iter().enumerate() {
                            if j == ref_idx {
                                continue;
                            }
                            let (uv, _) = cam.project(&point);
                            let feat = read_feature(&features[j], uv, cfg.nearest);
                            let inside = feat.is_some();
                            row.extend(feat.unwrap_or_else(|| vec![0.0; d]));
                            if cfg.use_plucker {
                                let a = cam.axis();
                                let m = point.cross(&a);
                                let code = [a.x, a.y, a.z, m.x, m.y, m.z];
                                row.extend(code.iter().map(|&v| if inside { v } else { 0.0 }));
                            }
                        }
                        let hidden: Vec<f64> = mat_vec(&weights.w1, &row)
                            .iter()
                            .zip(weights.b1.data())
                            .map(|(v, b)| (v + b).max(0.0))
                            .collect();
                        let f_mv: Vec<f64> = mat_vec(&weights.w2, &hidden)
                            .iter()
                            .zip(weights.b2.data())
                            .map(|(v, b)| v + b)
                            .collect();
                        keys.push(mat_vec(&weights.w_k, &f_mv));
                        values.push(mat_vec(&weights.w_v, &f_mv));
                    }
                    let q = mat_vec(&weights.w_q, &f_ref);
                    let scores: Vec<f64> = keys
                        .iter()
                        .map(|k| q.iter().zip(k).map(|(a, b)| a * b).sum::<f64>() / (d as f64).sqrt())
                        .collect();
                    let probs = direct_softmax(&scores);
                    let mut o = vec![0.0; d];
                    for (p, v) in probs.iter().zip(&values) {
                        for c in 0..d {
                            o[c] += p * v[c];
                        }
                    }
                    if cfg.residual {
                        for c in 0..d {
                            o[c] += f_ref[c];
                        }
                    }
                    o
                }
            };
            for c in 0..d {
                out[(c * h + y) * w + x] = result[c];
            }
        }
    }
    out
}
