//! Procedural scenes of textured spheres and boxes, rendered by orthographic
//! ray casting from the six-view rig. Albedo only, no shading, so a surface
//! point has the same color in every view.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{make_rig, Camera, DepthMap, Ray, Vec2, Vec3};
use crate::imageio::Image;

/// Every primitive lies inside this distance from the origin.
pub const SCENE_RADIUS: f64 = 0.9;

/// Maximum reprojection error (pixels) for a ground-truth correspondence.
pub const CORR_PIXEL_TOL: f64 = 0.5;
/// Maximum depth disagreement (world units) for a ground-truth correspondence.
pub const CORR_DEPTH_TOL: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Texture {
    /// Two-color 3D checkerboard.
    Checker { period: f64, a: [f32; 3], b: [f32; 3] },
    /// Smooth sinusoidal stripes across `dir`.
    Stripes {
        dir: [f64; 3],
        period: f64,
        phase: f64,
        a: [f32; 3],
        b: [f32; 3],
    },
}

/// Low-amplitude aperiodic modulation added on top of every texture, so
/// that no small window is perfectly flat.
fn grain(p: &Vec3) -> f64 {
    0.06 * ((p.x * 23.0 + p.y * 7.0).sin() + (p.y * 19.0 - p.z * 11.0).sin() + (p.z * 29.0 + p.x * 5.0).sin())
}

impl Texture {
    pub fn color(&self, p: &Vec3) -> [f32; 3] {
        let (a, b, t) = match self {
            Texture::Checker { period, a, b } => {
                let cell = (p / *period).map(f64::floor);
                let parity = (cell.x + cell.y + cell.z).rem_euclid(2.0);
                (a, b, parity)
            }
            Texture::Stripes { dir, period, phase, a, b } => {
                let d = Vec3::new(dir[0], dir[1], dir[2]);
                let s = (std::f64::consts::TAU * p.dot(&d) / period + phase).sin();
                (a, b, 0.5 + 0.5 * s)
            }
        };
        let g = grain(p);
        let mut out = [0.0f32; 3];
        for c in 0..3 {
            let v = a[c] as f64 * (1.0 - t) + b[c] as f64 * t + g;
            out[c] = v.clamp(0.0, 1.0) as f32;
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Primitive {
    Sphere { center: [f64; 3], radius: f64, texture: Texture },
    /// Axis-aligned box.
    Box { center: [f64; 3], half_extents: [f64; 3], texture: Texture },
}

impl Primitive {
    /// Nearest positive ray parameter at which the ray enters the primitive.
    pub fn intersect(&self, ray: &Ray) -> Option<f64> {
        match self {
            Primitive::Sphere { center, radius, .. } => {
                let oc = ray.origin - Vec3::from(*center);
                let b = oc.dot(&ray.dir);
                let c = oc.dot(&oc) - radius * radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                [-b - sq, -b + sq].into_iter().find(|&t| t > 0.0)
            }
            Primitive::Box { center, half_extents, .. } => {
                let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
                for k in 0..3 {
                    let lo = center[k] - half_extents[k];
                    let hi = center[k] + half_extents[k];
                    let (o, d) = (ray.origin[k], ray.dir[k]);
                    if d.abs() < 1e-15 {
                        if o < lo || o > hi {
                            return None;
                        }
                        continue;
                    }
                    let (a, b) = ((lo - o) / d, (hi - o) / d);
                    t0 = t0.max(a.min(b));
                    t1 = t1.min(a.max(b));
                }
                if t0 > t1 || t1 <= 0.0 {
                    None
                } else if t0 > 0.0 {
                    Some(t0)
                } else {
                    Some(t1)
                }
            }
        }
    }

    pub fn texture(&self) -> &Texture {
        match self {
            Primitive::Sphere { texture, .. } | Primitive::Box { texture, .. } => texture,
        }
    }

    /// Radius of a bounding sphere about the origin.
    pub fn extent(&self) -> f64 {
        match self {
            Primitive::Sphere { center, radius, .. } => Vec3::from(*center).norm() + radius,
            Primitive::Box { center, half_extents, .. } => {
                Vec3::from(*center).norm() + Vec3::from(*half_extents).norm()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub primitives: Vec<Primitive>,
    pub background: [f32; 3],
}

impl Scene {
    pub fn empty() -> Self {
        Self {
            primitives: Vec::new(),
            background: [1.0, 1.0, 1.0],
        }
    }

    /// Nearest hit: `(t, primitive index)`.
    pub fn hit(&self, ray: &Ray) -> Option<(f64, usize)> {
        self.primitives
            .iter()
            .enumerate()
            .filter_map(|(i, p)| p.intersect(ray).map(|t| (t, i)))
            .min_by(|a, b| a.0.total_cmp(&b.0))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderedView {
    pub color: Image,
    pub depth: DepthMap,
    pub camera: Camera,
}

/// Casts one orthographic ray per pixel centre. Depth is the camera-frame
/// distance to the nearest hit; misses get the background color and an
/// invalid depth.
pub fn render(scene: &Scene, cam: &Camera, resolution: usize) -> RenderedView {
    let cam = cam.with_resolution(resolution);
    let mut color = Image::new(3, resolution, resolution);
    let mut depth = DepthMap::new(resolution, resolution);
    for y in 0..resolution {
        for x in 0..resolution {
            let ray = cam.ray(Vec2::new(x as f64, y as f64));
            let rgb = match scene.hit(&ray) {
                Some((t, i)) => {
                    depth.set(x, y, Some(t as f32));
                    scene.primitives[i].texture().color(&ray.at(t))
                }
                None => scene.background,
            };
            for (c, v) in rgb.iter().enumerate() {
                color.set(c, x, y, *v);
            }
        }
    }
    RenderedView {
        color,
        depth,
        camera: cam,
    }
}

/// Bilinear depth at a sub-pixel position over the valid neighbours, with
/// their spread (max − min). `None` when the nearest pixel is invalid.
pub fn depth_at(depth: &DepthMap, uv: Vec2) -> Option<(f64, f64)> {
    if uv.x < 0.0 || uv.y < 0.0 || uv.x > (depth.width - 1) as f64 || uv.y > (depth.height - 1) as f64 {
        return None;
    }
    depth.get(uv.x.round() as usize, uv.y.round() as usize)?;
    let (x0, y0) = (uv.x.floor() as usize, uv.y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(depth.width - 1), (y0 + 1).min(depth.height - 1));
    let (fx, fy) = (uv.x - x0 as f64, uv.y - y0 as f64);
    let taps = [
        (x0, y0, (1.0 - fx) * (1.0 - fy)),
        (x1, y0, fx * (1.0 - fy)),
        (x0, y1, (1.0 - fx) * fy),
        (x1, y1, fx * fy),
    ];
    let (mut acc, mut total) = (0.0, 0.0);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (x, y, w) in taps {
        let Some(d) = depth.get(x, y) else { continue };
        if w < 1e-6 {
            continue;
        }
        acc += w * d;
        total += w;
        lo = lo.min(d);
        hi = hi.max(d);
    }
    Some((acc / total, hi - lo))
}

/// Where pixel `(x, y)` of `from` lands in `to`, if the surface point is
/// visible there: the projected position, rounded to the nearest pixel.
///
/// A pixel corresponds when its lifted point projects inside `to`, `to`'s
/// interpolated depth at that position agrees with the point's depth (so it
/// is not occluded), and lifting back from `to` reprojects into `from`
/// within [`CORR_PIXEL_TOL`] pixels. Depth agreement means a residual below
/// [`CORR_DEPTH_TOL`], widened to half the local depth spread where the
/// surface is curved or slanted between pixel centres.
pub fn correspondence_of(from: &RenderedView, to: &RenderedView, x: usize, y: usize) -> Option<(usize, usize)> {
    let d = from.depth.get(x, y)?;
    let p = Vec2::new(x as f64, y as f64);
    let world = from.camera.unproject(p, d).ok()?;
    let (uv, z) = to.camera.project(&world);
    let (zj, spread) = depth_at(&to.depth, uv)?;
    if (zj - z).abs() >= CORR_DEPTH_TOL.max(0.5 * spread) {
        return None;
    }
    let back = to.camera.unproject(uv, zj).ok()?;
    let (p_back, _) = from.camera.project(&back);
    if (p_back - p).norm() >= CORR_PIXEL_TOL {
        return None;
    }
    Some((uv.x.round() as usize, uv.y.round() as usize))
}

/// All occlusion-filtered pixel correspondences from `view_i` to `view_j`.
pub fn gt_correspondences(view_i: &RenderedView, view_j: &RenderedView) -> Vec<((usize, usize), (usize, usize))> {
    let mut out = Vec::new();
    for y in 0..view_i.depth.height {
        for x in 0..view_i.depth.width {
            if let Some(q) = correspondence_of(view_i, view_j, x, y) {
                out.push(((x, y), q));
            }
        }
    }
    out
}

fn random_color<R: Rng>(rng: &mut R) -> [f32; 3] {
    [rng.gen_range(0.05..0.95), rng.gen_range(0.05..0.95), rng.gen_range(0.05..0.95)]
}

fn random_texture<R: Rng>(rng: &mut R) -> Texture {
    let a = random_color(rng);
    // keep the two colors clearly apart so textures never wash out
    let mut b = random_color(rng);
    while (0..3).map(|c| (a[c] - b[c]).abs()).sum::<f32>() < 0.6 {
        b = random_color(rng);
    }
    if rng.gen_bool(0.5) {
        Texture::Checker {
            period: rng.gen_range(0.12..0.3),
            a,
            b,
        }
    } else {
        let dir = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let dir = dir / dir.norm().max(1e-6);
        Texture::Stripes {
            dir: [dir.x, dir.y, dir.z],
            period: rng.gen_range(0.15..0.4),
            phase: rng.gen_range(0.0..std::f64::consts::TAU),
            a,
            b,
        }
    }
}

/// A thin textured slab through the origin facing the front view, wide enough
/// to fill every frame with `ortho_scale ≤ 1`. The front-left and front-right
/// views foreshorten it equally, so their renders differ only by a shift.
pub fn facing_wall(texture: Texture) -> Scene {
    Scene {
        primitives: vec![Primitive::Box {
            center: [0.0, 0.0, 0.0],
            half_extents: [3.0, 0.05, 3.0],
            texture,
        }],
        background: [1.0, 1.0, 1.0],
    }
}

/// A random scene of one to four textured primitives inside [`SCENE_RADIUS`].
pub fn random_scene(seed: u64) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = rng.gen_range(1..=4);
    let mut primitives = Vec::with_capacity(count);
    while primitives.len() < count {
        let size = rng.gen_range(0.2..0.5);
        let texture = random_texture(&mut rng);
        let center = [rng.gen_range(-0.45..0.45), rng.gen_range(-0.45..0.45), rng.gen_range(-0.45..0.45)];
        let prim = if rng.gen_bool(0.5) {
            Primitive::Sphere { center, radius: size, texture }
        } else {
            let half = [
                size * rng.gen_range(0.5..1.0),
                size * rng.gen_range(0.5..1.0),
                size * rng.gen_range(0.5..1.0),
            ];
            Primitive::Box { center, half_extents: half, texture }
        };
        if prim.extent() <= SCENE_RADIUS {
            primitives.push(prim);
        }
    }
    Scene {
        primitives,
        background: [1.0, 1.0, 1.0],
    }
}

/// One generated scene with its renders from all six rig views.
#[derive(Clone, Debug)]
pub struct SceneSample {
    pub seed: u64,
    pub scene: Scene,
    pub views: Vec<RenderedView>,
}

fn color_variance(view: &RenderedView) -> f64 {
    let n = view.depth.valid_count();
    if n < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for c in 0..3 {
        let vals: Vec<f64> = view
            .color
            .plane(c)
            .iter()
            .zip(&view.depth.valid)
            .filter(|(_, &ok)| ok)
            .map(|(&v, _)| v as f64)
            .collect();
        let m = vals.iter().sum::<f64>() / n as f64;
        total += vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64;
    }
    total
}

/// `n_scenes` seeded random scenes rendered from the six-view rig. Scenes
/// that leave some view empty or untextured are redrawn.
pub fn make_dataset(n_scenes: usize, seed: u64, resolution: usize, ortho_scale: f64) -> Vec<SceneSample> {
    let cams = make_rig(ortho_scale, resolution);
    let mut seeds = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_scenes);
    while out.len() < n_scenes {
        let scene_seed: u64 = seeds.gen();
        let scene = random_scene(scene_seed);
        let views: Vec<RenderedView> = cams.iter().map(|c| render(&scene, c, resolution)).collect();
        let usable = views
            .iter()
            .all(|v| v.depth.valid_count() > 0 && color_variance(v) > 1e-4);
        if usable {
            out.push(SceneSample {
                seed: scene_seed,
                scene,
                views,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    use crate::geometry::{ViewId, RIG_RADIUS};

    fn unit_sphere() -> Scene {
        Scene {
            primitives: vec![Primitive::Sphere {
                center: [0.0; 3],
                radius: 1.0,
                texture: Texture::Checker {
                    period: 0.2,
                    a: [0.1, 0.2, 0.3],
                    b: [0.9, 0.8, 0.7],
                },
            }],
            background: [1.0, 1.0, 1.0],
        }
    }

    fn sphere(radius: f64) -> Scene {
        let mut s = unit_sphere();
        if let Primitive::Sphere { radius: r, .. } = &mut s.primitives[0] {
            *r = radius;
        }
        s
    }

    #[test]
    fn empty_scene_is_background() {
        let cams = make_rig(1.0, 32);
        let v = render(&Scene::empty(), &cams[0], 32);
        assert_eq!(v.depth.valid_count(), 0);
        assert!(v.color.data.iter().all(|&c| c == 1.0));
    }

    #[test]
    fn unit_sphere_silhouette_and_depth() {
        let cams = make_rig(1.5, 96);
        let v = render(&unit_sphere(), &cams[0], 96);
        // disc radius (radius / ortho_scale) * W/2 = 32 px
        let expected_area = std::f64::consts::PI * 32.0 * 32.0;
        let area = v.depth.valid_count() as f64;
        let r_est = (area / std::f64::consts::PI).sqrt();
        assert!((r_est - 32.0).abs() <= 1.0, "{r_est} vs 32 ({expected_area})");
        let centre = Vec2::new(47.5, 47.5);
        let (d, _) = depth_at(&v.depth, centre).unwrap();
        assert!((d - (RIG_RADIUS - 1.0)).abs() < 1e-3);
        let exact = v.depth.get(48, 48).unwrap();
        let off = (0.5f64 * v.camera.pixel_size()).hypot(0.5 * v.camera.pixel_size());
        let analytic = RIG_RADIUS - (1.0 - off * off).sqrt();
        assert!((exact - analytic).abs() < 1e-4);
    }

    #[test]
    fn box_hit_from_front() {
        let scene = Scene {
            primitives: vec![Primitive::Box {
                center: [0.0; 3],
                half_extents: [0.3, 0.2, 0.3],
                texture: Texture::Checker { period: 0.1, a: [0.0; 3], b: [1.0; 3] },
            }],
            background: [0.5; 3],
        };
        let cams = make_rig(1.0, 32);
        let v = render(&scene, &cams[0], 32);
        assert!((v.depth.get(16, 16).unwrap() - (RIG_RADIUS - 0.2)).abs() < 1e-6);
        assert!(v.depth.get(0, 0).is_none());
    }

    #[test]
    fn valid_pixels_round_trip_across_views() {
        let cams = make_rig(1.0, 48);
        let scene = random_scene(5);
        let views: Vec<RenderedView> = cams.iter().map(|c| render(&scene, c, 48)).collect();
        for (i, vi) in views.iter().enumerate() {
            for y in 0..48 {
                for x in 0..48 {
                    let Some(d) = vi.depth.get(x, y) else { continue };
                    let p = Vec2::new(x as f64, y as f64);
                    let w = vi.camera.unproject(p, d).unwrap();
                    let (back, z) = vi.camera.project(&w);
                    assert!((back - p).norm() < 1e-5 && (z - d).abs() < 1e-5);
                    for vj in views.iter().skip(i + 1) {
                        if let Some((qx, qy)) = correspondence_of(vi, vj, x, y) {
                            let (uv, _) = vj.camera.project(&w);
                            assert!((uv - Vec2::new(qx as f64, qy as f64)).norm() <= 0.5 + 1e-9);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn self_correspondences_are_identity() {
        let cams = make_rig(1.0, 32);
        let v = render(&random_scene(2), &cams[1], 32);
        let corr = gt_correspondences(&v, &v);
        assert_eq!(corr.len(), v.depth.valid_count());
        assert!(corr.iter().all(|(a, b)| a == b));
    }

    #[test]
    fn opposite_views_of_opaque_sphere_share_nothing() {
        let cams = make_rig(1.0, 32);
        let s = sphere(0.6);
        let front = render(&s, &cams[ViewId::Front.index()], 32);
        let back = render(&s, &cams[ViewId::Back.index()], 32);
        assert!(gt_correspondences(&front, &back).is_empty());
    }

    #[test]
    fn dataset_is_deterministic_and_textured() {
        let a = make_dataset(3, 7, 32, 1.0);
        let b = make_dataset(3, 7, 32, 1.0);
        assert_eq!(a.len(), 3);
        for (sa, sb) in a.iter().zip(&b) {
            assert_eq!(sa.scene, sb.scene);
            for (va, vb) in sa.views.iter().zip(&sb.views) {
                assert_eq!(va.color.data, vb.color.data);
                assert_eq!(va.depth, vb.depth);
            }
            for v in &sa.views {
                assert!(v.depth.valid_count() >= 1);
                assert!(color_variance(v) > 0.0);
            }
            for p in &sa.scene.primitives {
                assert!(p.extent() <= SCENE_RADIUS);
            }
        }
    }

    #[test]
    fn coarse_and_fine_renders_agree_after_averaging() {
        let cams = make_rig(1.0, 64);
        for seed in 0..4 {
            let scene = random_scene(seed);
            for cam in &cams {
                let fine = render(&scene, cam, 128).color.downsample(2);
                let coarse = render(&scene, cam, 64).color;
                let mad = fine
                    .data
                    .iter()
                    .zip(&coarse.data)
                    .map(|(a, b)| (a - b).abs() as f64)
                    .sum::<f64>()
                    / fine.data.len() as f64;
                assert!(mad < 0.1, "seed {seed}: {mad}");
            }
        }
    }

    fn interior(depth: &DepthMap, (x, y): (usize, usize)) -> bool {
        (x.saturating_sub(1)..=(x + 1).min(depth.width - 1))
            .all(|xx| (y.saturating_sub(1)..=(y + 1).min(depth.height - 1)).all(|yy| depth.get(xx, yy).is_some()))
    }

    #[test]
    fn correspondences_agree_with_ray_casting_away_from_silhouettes() {
        let (mut fast_total, mut fast_true, mut inner_total, mut inner_found) = (0, 0, 0, 0);
        for seed in 0..6 {
            let scene = random_scene(seed);
            let cams = make_rig(1.0, 64);
            let views: Vec<RenderedView> = cams.iter().map(|c| render(&scene, c, 64)).collect();
            for (i, j) in [(0, 1), (0, 2), (1, 3), (4, 0), (2, 5)] {
                let fast: HashSet<_> = gt_correspondences(&views[i], &views[j]).into_iter().collect();
                let slow: HashSet<_> = crate::oracle::brute_force_correspondences(&scene, &views[i], &views[j])
                    .into_iter()
                    .collect();
                fast_total += fast.len();
                fast_true += fast.intersection(&slow).count();
                for &(p, q) in &slow {
                    if interior(&views[i].depth, p) && interior(&views[j].depth, q) {
                        inner_total += 1;
                        inner_found += fast.contains(&(p, q)) as usize;
                    }
                }
            }
        }
        let precision = fast_true as f64 / fast_total as f64;
        let recall = inner_found as f64 / inner_total as f64;
        assert!(precision > 0.97, "precision {precision}");
        assert!(recall > 0.9, "interior recall {recall}");
    }
}
