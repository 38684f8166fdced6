//! Image quality (PSNR, SSIM), cross-view consistency measured as the number
//! of epipolar template matches, and the memory/compute model of full versus
//! truncated epipolar attention.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{epipolar_segment, Camera, Vec2};
use crate::imageio::Image;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("image shapes differ: {0:?} vs {1:?}")]
    ShapeMismatch((usize, usize, usize), (usize, usize, usize)),
    #[error("image {0}x{1} is smaller than the {2}x{2} window")]
    TooSmall(usize, usize, usize),
}

fn same_shape(a: &Image, b: &Image) -> Result<(), MetricError> {
    if a.dims() != b.dims() {
        return Err(MetricError::ShapeMismatch(a.dims(), b.dims()));
    }
    Ok(())
}

/// `10·log10(peak² / MSE)`; identical images give `+∞`.
pub fn psnr(a: &Image, b: &Image, peak: f64) -> Result<f64, MetricError> {
    same_shape(a, b)?;
    let sq: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    let mse = sq / a.data.len().max(1) as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

/// Normalized 1-D Gaussian taps of the SSIM window.
pub fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let c = (SSIM_WINDOW / 2) as f64;
    let mut g = [0.0; SSIM_WINDOW];
    for (i, v) in g.iter_mut().enumerate() {
        let x = i as f64 - c;
        *v = (-x * x / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = g.iter().sum();
    g.map(|v| v / s)
}

/// Separable "valid" Gaussian filtering of a `w × h` plane.
fn blur(plane: &[f64], w: usize, h: usize, g: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (ow, oh) = (w + 1 - SSIM_WINDOW, h + 1 - SSIM_WINDOW);
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..SSIM_WINDOW).map(|k| g[k] * plane[y * w + x + k]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..SSIM_WINDOW).map(|k| g[k] * rows[(y + k) * ow + x]).sum();
        }
    }
    out
}

/// Mean SSIM over all fully-covered 11×11 Gaussian windows and channels.
pub fn ssim(a: &Image, b: &Image) -> Result<f64, MetricError> {
    same_shape(a, b)?;
    let (w, h) = (a.width, a.height);
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(MetricError::TooSmall(w, h, SSIM_WINDOW));
    }
    let g = gaussian_taps();
    let mut total = 0.0;
    let mut count = 0usize;
    for c in 0..a.channels {
        let pa: Vec<f64> = a.plane(c).iter().map(|&v| v as f64).collect();
        let pb: Vec<f64> = b.plane(c).iter().map(|&v| v as f64).collect();
        let prod = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(x, y)| x * y).collect::<Vec<_>>();
        let mu_a = blur(&pa, w, h, &g);
        let mu_b = blur(&pb, w, h, &g);
        let e_aa = blur(&prod(&pa, &pa), w, h, &g);
        let e_bb = blur(&prod(&pb, &pb), w, h, &g);
        let e_ab = blur(&prod(&pa, &pb), w, h, &g);
        for i in 0..mu_a.len() {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = e_aa[i] - ma * ma;
            let vb = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            let num = (2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2);
            let den = (ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2);
            total += num / den;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Settings of the epipolar template matcher.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatcherConfig {
    /// Minimum normalized cross-correlation of an accepted match.
    pub threshold: f64,
    /// Odd window side.
    pub window: usize,
    /// Spacing of the query grid in view i.
    pub stride: usize,
    /// Windows whose standard deviation falls below this are untextured.
    pub min_std: f64,
    /// Allowed distance (pixels, per axis) between a query and its reverse match.
    pub mutual_tolerance: usize,
    /// Reference depth range searched along each epipolar line.
    pub z_range: (f64, f64),
}

impl Default for MatcherConfig {
    fn default() -> Self {
        Self {
            threshold: 0.9,
            window: 7,
            stride: 4,
            min_std: 0.01,
            mutual_tolerance: 1,
            z_range: (0.6, 2.4),
        }
    }
}

/// One image to match, with its camera and an optional query mask.
#[derive(Clone, Copy, Debug)]
pub struct MatchView<'a> {
    pub image: &'a Image,
    pub camera: &'a Camera,
    pub mask: Option<&'a [bool]>,
}

/// Zero-mean, unit-norm window vectors (all channels) per pixel; `None`
/// where the window leaves the image or is untextured.
struct Windows {
    width: usize,
    vecs: Vec<Option<Vec<f64>>>,
}

impl Windows {
    fn new(img: &Image, cfg: &MatcherConfig) -> Self {
        let half = cfg.window / 2;
        let (w, h) = (img.width, img.height);
        let len = img.channels * cfg.window * cfg.window;
        let mut vecs = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                if x < half || y < half || x + half >= w || y + half >= h {
                    vecs.push(None);
                    continue;
                }
                let mut v = Vec::with_capacity(len);
                for c in 0..img.channels {
                    for yy in y - half..=y + half {
                        for xx in x - half..=x + half {
                            v.push(img.get(c, xx, yy) as f64);
                        }
                    }
                }
                let mean = v.iter().sum::<f64>() / len as f64;
                let ss: f64 = v.iter().map(|a| (a - mean) * (a - mean)).sum();
                if (ss / len as f64).sqrt() < cfg.min_std {
                    vecs.push(None);
                    continue;
                }
                let norm = ss.sqrt();
                vecs.push(Some(v.into_iter().map(|a| (a - mean) / norm).collect()));
            }
        }
        Self { width: w, vecs }
    }

    fn at(&self, x: usize, y: usize) -> Option<&[f64]> {
        self.vecs[y * self.width + x].as_deref()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Integer pixels along the epipolar segment of `p` in `cam_to`, one per unit step.
fn candidates(p: (usize, usize), cam_from: &Camera, cam_to: &Camera, z_range: (f64, f64)) -> Vec<(usize, usize)> {
    let Ok(seg) = epipolar_segment(Vec2::new(p.0 as f64, p.1 as f64), cam_from, cam_to, z_range) else {
        return Vec::new();
    };
    let steps = seg.length().ceil() as usize;
    let mut out: Vec<(usize, usize)> = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let t = if steps == 0 { 0.0 } else { k as f64 / steps as f64 };
        let q = seg.start + (seg.end - seg.start) * t;
        let q = (q.x.round() as usize, q.y.round() as usize);
        if out.last() != Some(&q) {
            out.push(q);
        }
    }
    out
}

fn best_match(
    query: &[f64],
    p: (usize, usize),
    cam_from: &Camera,
    to: &Windows,
    cam_to: &Camera,
    z_range: (f64, f64),
) -> Option<((usize, usize), f64)> {
    candidates(p, cam_from, cam_to, z_range)
        .into_iter()
        .filter_map(|q| to.at(q.0, q.1).map(|v| (q, dot(query, v))))
        .max_by(|a, b| a.1.total_cmp(&b.1))
}

/// Query pixels of view i: the stride grid restricted to full windows.
pub fn stride_grid(width: usize, height: usize, cfg: &MatcherConfig) -> Vec<(usize, usize)> {
    let half = cfg.window / 2;
    let mut out = Vec::new();
    for y in (0..height).step_by(cfg.stride.max(1)) {
        for x in (0..width).step_by(cfg.stride.max(1)) {
            if x >= half && y >= half && x + half < width && y + half < height {
                out.push((x, y));
            }
        }
    }
    out
}

/// Mutually consistent NCC matches from the stride grid of view i into view j.
pub fn find_matches(
    view_i: MatchView,
    view_j: MatchView,
    cfg: &MatcherConfig,
) -> Vec<((usize, usize), (usize, usize), f64)> {
    let wi = Windows::new(view_i.image, cfg);
    let wj = Windows::new(view_j.image, cfg);
    let mut out = Vec::new();
    for p in stride_grid(view_i.image.width, view_i.image.height, cfg) {
        if let Some(mask) = view_i.mask {
            if !mask[p.1 * view_i.image.width + p.0] {
                continue;
            }
        }
        let Some(query) = wi.at(p.0, p.1) else { continue };
        let Some((q, score)) = best_match(query, p, view_i.camera, &wj, view_j.camera, cfg.z_range) else {
            continue;
        };
        if score <= cfg.threshold {
            continue;
        }
        let back = wj.at(q.0, q.1).expect("candidate has a window");
        let Some((p_back, _)) = best_match(back, q, view_j.camera, &wi, view_i.camera, cfg.z_range) else {
            continue;
        };
        if p_back.0.abs_diff(p.0) <= cfg.mutual_tolerance && p_back.1.abs_diff(p.1) <= cfg.mutual_tolerance {
            out.push((p, q, score));
        }
    }
    out
}

pub fn correspondence_count(view_i: MatchView, view_j: MatchView, cfg: &MatcherConfig) -> usize {
    find_matches(view_i, view_j, cfg).len()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostMode {
    Full,
    Truncated,
}

/// Per-view cost of one attention level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelCost {
    pub resolution: usize,
    pub keys_per_query: usize,
    /// `H·W·keys·d·2` (keys and values).
    pub kv_floats: u64,
    /// `H·W·keys·d·4`: a multiply-add each for `QKᵀ` and the weighted sum of `V`.
    pub attention_flops: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub mode: CostMode,
    pub n_views: usize,
    pub bytes_per_float: usize,
    pub levels: Vec<LevelCost>,
    /// Level costs summed and multiplied by the number of views.
    pub total_kv_floats: u64,
    pub total_attention_flops: u64,
    pub total_kv_bytes: u64,
}

impl CostReport {
    fn from_levels(mode: CostMode, n_views: usize, bytes_per_float: usize, levels: Vec<LevelCost>) -> Self {
        let kv: u64 = levels.iter().map(|l| l.kv_floats).sum::<u64>() * n_views as u64;
        let flops: u64 = levels.iter().map(|l| l.attention_flops).sum::<u64>() * n_views as u64;
        Self {
            mode,
            n_views,
            bytes_per_float,
            levels,
            total_kv_floats: kv,
            total_attention_flops: flops,
            total_kv_bytes: kv * bytes_per_float as u64,
        }
    }
}

pub fn level_cost(resolution: usize, keys_per_query: usize, d: usize) -> LevelCost {
    let base = (resolution * resolution) as u64 * keys_per_query as u64 * d as u64;
    LevelCost {
        resolution,
        keys_per_query,
        kv_floats: base * 2,
        attention_flops: base * 4,
    }
}

/// Cost of one level. Truncated attention reads `n_p` keys per query; full
/// attention reads `n_line_samples`.
pub fn cost_model(
    mode: CostMode,
    resolution: usize,
    n_views: usize,
    d: usize,
    n_p: usize,
    n_line_samples: usize,
    bytes_per_float: usize,
) -> CostReport {
    let keys = match mode {
        CostMode::Full => n_line_samples,
        CostMode::Truncated => n_p,
    };
    CostReport::from_levels(mode, n_views, bytes_per_float, vec![level_cost(resolution, keys, d)])
}

/// Cost over several levels; `keys[k]` keys per query at `resolutions[k]`.
pub fn hierarchy_cost(
    mode: CostMode,
    resolutions: &[usize],
    keys: &[usize],
    n_views: usize,
    d: usize,
    bytes_per_float: usize,
) -> CostReport {
    let levels = resolutions
        .iter()
        .zip(keys)
        .map(|(&r, &k)| level_cost(r, k, d))
        .collect();
    CostReport::from_levels(mode, n_views, bytes_per_float, levels)
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::geometry::{make_rig, ViewId};
    use crate::oracle::{naive_psnr, naive_ssim};
    use crate::synthscene::{facing_wall, gt_correspondences, render, Primitive, RenderedView, Scene, Texture};

    fn random_image(c: usize, w: usize, h: usize, rng: &mut ChaCha8Rng) -> Image {
        Image::from_data(c, w, h, (0..c * w * h).map(|_| rng.gen::<f32>()).collect())
    }

    #[test]
    fn psnr_examples_and_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = random_image(3, 9, 7, &mut rng);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);
        let b = Image::from_data(1, 2, 2, vec![0.0; 4]);
        let c = Image::from_data(1, 2, 2, vec![0.1; 4]);
        assert!((psnr(&b, &c, 1.0).unwrap() - 20.0).abs() < 1e-5);
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_image(3, 12, 10, &mut rng);
            let y = random_image(3, 12, 10, &mut rng);
            let fast = psnr(&x, &y, 1.0).unwrap();
            assert!((fast - naive_psnr(&x, &y, 1.0)).abs() < 1e-9);
            assert_eq!(fast, psnr(&y, &x, 1.0).unwrap());
        }
        assert!(psnr(&a, &b, 1.0).is_err());
    }

    #[test]
    fn ssim_identity_luminance_and_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_image(3, 32, 32, &mut rng);
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
        let flat = Image::filled(1, 16, 16, 0.2);
        let bright = Image::filled(1, 16, 16, 0.7);
        let s = ssim(&flat, &bright).unwrap();
        let (ma, mb) = (0.2f32 as f64, 0.7f32 as f64);
        let lum = (2.0 * ma * mb + SSIM_C1) / (ma * ma + mb * mb + SSIM_C1);
        assert!(s < 1.0 && (s - lum).abs() < 1e-9);
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(10 + seed);
            let x = random_image(1, 32, 32, &mut rng);
            let y = random_image(1, 32, 32, &mut rng);
            let s = ssim(&x, &y).unwrap();
            assert!((s - naive_ssim(&x, &y)).abs() < 1e-6);
            assert!((-1.0..=1.0).contains(&s));
        }
        assert!(ssim(&Image::new(1, 8, 8), &Image::new(1, 8, 8)).is_err());
    }

    fn textured_sphere() -> Scene {
        Scene {
            primitives: vec![Primitive::Sphere {
                center: [0.0, 0.0, 0.0],
                radius: 0.8,
                texture: Texture::Stripes {
                    dir: [0.6, 0.3, 0.74],
                    period: 0.35,
                    phase: 0.3,
                    a: [0.9, 0.2, 0.1],
                    b: [0.1, 0.5, 0.9],
                },
            }],
            background: [1.0, 1.0, 1.0],
        }
    }

    /// Front-left / front-right renders of a checkered wall.
    fn wall_pair(res: usize) -> (RenderedView, RenderedView) {
        let cams = make_rig(0.8, res);
        let scene = facing_wall(Texture::Checker {
            period: 0.25,
            a: [0.9, 0.2, 0.1],
            b: [0.1, 0.5, 0.9],
        });
        (
            render(&scene, &cams[ViewId::FrontLeft.index()], res),
            render(&scene, &cams[ViewId::FrontRight.index()], res),
        )
    }

    #[test]
    fn untextured_views_have_no_matches() {
        let cams = make_rig(1.0, 32);
        let a = Image::filled(3, 32, 32, 0.4);
        let view = |i: usize| MatchView {
            image: &a,
            camera: &cams[i],
            mask: None,
        };
        assert_eq!(correspondence_count(view(0), view(1), &MatcherConfig::default()), 0);
    }

    #[test]
    fn self_matches_cover_textured_grid() {
        let cams = make_rig(1.0, 64);
        let v = render(&textured_sphere(), &cams[0], 64);
        let cfg = MatcherConfig::default();
        let view = MatchView {
            image: &v.color,
            camera: &v.camera,
            mask: Some(&v.depth.valid),
        };
        let grid: Vec<_> = stride_grid(64, 64, &cfg)
            .into_iter()
            .filter(|&(x, y)| v.depth.get(x, y).is_some())
            .collect();
        let n = correspondence_count(view, view, &cfg);
        assert!(n as f64 >= 0.99 * grid.len() as f64 && n <= grid.len(), "{n} of {}", grid.len());
    }

    #[test]
    fn matches_track_ground_truth_and_misalignment() {
        let (a, b) = wall_pair(128);
        let cfg = MatcherConfig::default();
        let grid = stride_grid(128, 128, &cfg);
        let gt = gt_correspondences(&a, &b)
            .into_iter()
            .filter(|(p, _)| grid.contains(p))
            .count();
        let count = |img: &Image| {
            correspondence_count(
                MatchView {
                    image: &a.color,
                    camera: &a.camera,
                    mask: Some(&a.depth.valid),
                },
                MatchView {
                    image: img,
                    camera: &b.camera,
                    mask: None,
                },
                &cfg,
            )
        };
        let aligned = count(&b.color);
        assert!((aligned as f64 - gt as f64).abs() <= 0.05 * gt as f64, "{aligned} vs {gt}");
        let shifted2 = count(&b.color.shifted(0, 2, 1.0));
        let shifted4 = count(&b.color.shifted(0, 4, 1.0));
        assert!(aligned > shifted2 && shifted2 > shifted4, "{aligned} {shifted2} {shifted4}");
    }

    #[test]
    fn cost_examples() {
        let t = cost_model(CostMode::Truncated, 256, 1, 64, 2, 256, 4);
        assert_eq!(t.levels[0].kv_floats, 16_777_216);
        assert_eq!(t.total_kv_bytes, 16_777_216 * 4);
        let f = cost_model(CostMode::Full, 256, 1, 64, 2, 256, 4);
        assert_eq!(f.total_kv_floats, t.total_kv_floats * 128);
        let f128 = cost_model(CostMode::Full, 128, 1, 64, 2, 128, 4);
        assert_eq!(f.total_kv_floats, 8 * f128.total_kv_floats);
        let six = cost_model(CostMode::Truncated, 256, 6, 64, 2, 256, 4);
        assert_eq!(six.total_kv_floats, 6 * t.total_kv_floats);
        assert_eq!(six.total_attention_flops, 2 * six.total_kv_floats);
    }

    #[test]
    fn cost_is_linear_in_each_factor() {
        let base = level_cost(32, 7, 16);
        assert_eq!(level_cost(64, 7, 16).kv_floats, 4 * base.kv_floats);
        assert_eq!(level_cost(32, 14, 16).kv_floats, 2 * base.kv_floats);
        assert_eq!(level_cost(32, 7, 48).attention_flops, 3 * base.attention_flops);
        let h = hierarchy_cost(CostMode::Truncated, &[32, 64], &[7, 2], 2, 16, 4);
        assert_eq!(h.total_kv_floats, 2 * (base.kv_floats + level_cost(64, 2, 16).kv_floats));
    }
}
