//! Orthographic six-view rig, projection, epipolar segments and
//! depth-truncated stratified ray sampling.
//!
//! Conventions:
//! * camera frame: `x` right, `y` down, `z` along the viewing axis;
//!   `x_cam = R · x_world + t`.
//! * pixel coordinates are continuous with integer values at pixel centres,
//!   so pixel `(u, v)` covers `[u − 0.5, u + 0.5)` and sits at normalized
//!   image coordinate `(u + 0.5) / W`.
//! * the front camera looks along world `+y` from `(0, −radius, 0)` with
//!   world `+z` as image up; the other views rotate it about world `z`.

use std::fmt;

use nalgebra::{Matrix3, Rotation3, Vector2, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec2 = Vector2<f64>;
pub type Vec3 = Vector3<f64>;

/// Distance from each rig camera to the world origin.
pub const RIG_RADIUS: f64 = 1.5;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("depth {0} is not a finite value")]
    InvalidDepth(f64),
    #[error("pixel ({u}, {v}) lies outside the {width}x{height} image")]
    PixelOutOfBounds { u: f64, v: f64, width: usize, height: usize },
    #[error("ray direction has zero length")]
    ZeroDirection,
    #[error("stratified sampling needs n_p >= 1 and r > 0 (got n_p={n_p}, r={r})")]
    BadSampling { n_p: usize, r: f64 },
    #[error("epipolar segment lies entirely outside view {0}")]
    EmptySegment(ViewId),
    #[error("pixel ({0}, {1}) has no valid depth")]
    MissingDepth(usize, usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewId {
    Front,
    FrontRight,
    Right,
    Back,
    Left,
    FrontLeft,
}

impl ViewId {
    /// Rig order. Everything that concatenates per-view data uses this order.
    pub const ALL: [ViewId; 6] = [
        ViewId::Front,
        ViewId::FrontRight,
        ViewId::Right,
        ViewId::Back,
        ViewId::Left,
        ViewId::FrontLeft,
    ];

    pub fn azimuth_deg(self) -> f64 {
        match self {
            ViewId::Front => 0.0,
            ViewId::FrontRight => 45.0,
            ViewId::Right => 90.0,
            ViewId::Back => 180.0,
            ViewId::Left => 270.0,
            ViewId::FrontLeft => 315.0,
        }
    }

    pub fn index(self) -> usize {
        ViewId::ALL.iter().position(|&v| v == self).unwrap()
    }

    pub fn name(self) -> &'static str {
        match self {
            ViewId::Front => "front",
            ViewId::FrontRight => "front_right",
            ViewId::Right => "right",
            ViewId::Back => "back",
            ViewId::Left => "left",
            ViewId::FrontLeft => "front_left",
        }
    }
}

impl fmt::Display for ViewId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Orthographic camera. `ortho_scale` is the world extent of half the image.
#[derive(Clone, Debug, PartialEq)]
pub struct Camera {
    pub view_id: ViewId,
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
    pub ortho_scale: f64,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    /// Camera on a circle of `radius` at `view_id`'s azimuth, looking at the origin.
    pub fn on_rig(view_id: ViewId, radius: f64, ortho_scale: f64, resolution: usize) -> Self {
        // Front camera axes expressed in world coordinates (rows of R).
        let front = Matrix3::new(
            1.0, 0.0, 0.0, //
            0.0, 0.0, -1.0, //
            0.0, 1.0, 0.0,
        );
        let yaw = Rotation3::from_axis_angle(&Vec3::z_axis(), view_id.azimuth_deg().to_radians());
        // Rotating the camera by `yaw` in world space: R = R_front · yawᵀ.
        let rotation = front * yaw.matrix().transpose();
        let center = yaw * Vec3::new(0.0, -radius, 0.0);
        Self {
            view_id,
            rotation,
            translation: -(rotation * center),
            ortho_scale,
            width: resolution,
            height: resolution,
        }
    }

    /// World position of the camera plane origin.
    pub fn center(&self) -> Vec3 {
        -(self.rotation.transpose() * self.translation)
    }

    /// Unit viewing direction in world coordinates.
    pub fn axis(&self) -> Vec3 {
        self.rotation.row(2).transpose()
    }

    /// Camera-to-world transform `(Rᵀ, −Rᵀt)`.
    pub fn cam_to_world(&self) -> (Matrix3<f64>, Vec3) {
        let rt = self.rotation.transpose();
        (rt, -(rt * self.translation))
    }

    /// World units per pixel.
    pub fn pixel_size(&self) -> f64 {
        2.0 * self.ortho_scale / self.width as f64
    }

    pub fn with_resolution(&self, resolution: usize) -> Self {
        Self {
            width: resolution,
            height: resolution,
            ..self.clone()
        }
    }

    pub fn contains(&self, uv: Vec2) -> bool {
        uv.x >= 0.0
            && uv.y >= 0.0
            && uv.x <= (self.width - 1) as f64
            && uv.y <= (self.height - 1) as f64
    }

    /// Orthographic projection; returns pixel coordinates and camera-frame depth.
    /// Points outside the image are returned as-is (check with [`Camera::contains`]).
    pub fn project(&self, point: &Vec3) -> (Vec2, f64) {
        let pc = self.rotation * point + self.translation;
        let u = (pc.x / self.ortho_scale + 1.0) * self.width as f64 / 2.0 - 0.5;
        let v = (pc.y / self.ortho_scale + 1.0) * self.height as f64 / 2.0 - 0.5;
        (Vec2::new(u, v), pc.z)
    }

    fn plane_point(&self, uv: Vec2, depth: f64) -> Vec3 {
        let x = ((uv.x + 0.5) * 2.0 / self.width as f64 - 1.0) * self.ortho_scale;
        let y = ((uv.y + 0.5) * 2.0 / self.height as f64 - 1.0) * self.ortho_scale;
        self.rotation.transpose() * (Vec3::new(x, y, depth) - self.translation)
    }

    /// World point at `depth` along the ray through pixel `uv`.
    pub fn unproject(&self, uv: Vec2, depth: f64) -> Result<Vec3, GeometryError> {
        if !depth.is_finite() {
            return Err(GeometryError::InvalidDepth(depth));
        }
        let inside = uv.x >= -0.5
            && uv.y >= -0.5
            && uv.x < self.width as f64 - 0.5
            && uv.y < self.height as f64 - 0.5;
        if !inside {
            return Err(GeometryError::PixelOutOfBounds {
                u: uv.x,
                v: uv.y,
                width: self.width,
                height: self.height,
            });
        }
        Ok(self.plane_point(uv, depth))
    }

    /// Viewing ray through pixel `uv`, originating on the camera plane.
    pub fn ray(&self, uv: Vec2) -> Ray {
        Ray {
            origin: self.plane_point(uv, 0.0),
            dir: self.axis(),
        }
    }
}

/// The six fixed views, in rig order, at elevation 0 around the origin.
pub fn make_rig(ortho_scale: f64, resolution: usize) -> Vec<Camera> {
    make_rig_with_radius(RIG_RADIUS, ortho_scale, resolution)
}

pub fn make_rig_with_radius(radius: f64, ortho_scale: f64, resolution: usize) -> Vec<Camera> {
    ViewId::ALL
        .iter()
        .map(|&v| Camera::on_rig(v, radius, ortho_scale, resolution))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub dir: Vec3,
}

impl Ray {
    /// Builds a ray, normalizing `dir`.
    pub fn new(origin: Vec3, dir: Vec3) -> Result<Self, GeometryError> {
        let n = dir.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(GeometryError::ZeroDirection);
        }
        Ok(Self {
            origin,
            dir: dir / n,
        })
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.dir * t
    }
}

/// Plücker coordinates `(dir, origin × dir)`.
pub fn plucker(ray: &Ray) -> Result<[f64; 6], GeometryError> {
    let n = ray.dir.norm();
    if n == 0.0 || !n.is_finite() {
        return Err(GeometryError::ZeroDirection);
    }
    let d = ray.dir / n;
    let m = ray.origin.cross(&d);
    Ok([d.x, d.y, d.z, m.x, m.y, m.z])
}

/// Projection of a reference ray's depth interval into another view.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpipolarSegment {
    pub start: Vec2,
    pub end: Vec2,
    /// Reference depths corresponding to `start` and `end` after clipping.
    pub depth_start: f64,
    pub depth_end: f64,
}

impl EpipolarSegment {
    pub fn length(&self) -> f64 {
        (self.end - self.start).norm()
    }

    pub fn is_point(&self) -> bool {
        self.length() < 1e-9
    }

    /// Distance from `p` to the segment's supporting line (or point).
    pub fn line_distance(&self, p: Vec2) -> f64 {
        let d = self.end - self.start;
        let len = d.norm();
        if len < 1e-12 {
            return (p - self.start).norm();
        }
        let rel = p - self.start;
        (d.x * rel.y - d.y * rel.x).abs() / len
    }
}

/// Projects the reference ray through `pixel`, restricted to `z_range`, into
/// `cam_j` and clips it to the image's pixel-centre box `[0, W−1] × [0, H−1]`.
pub fn epipolar_segment(
    pixel: Vec2,
    cam_ref: &Camera,
    cam_j: &Camera,
    z_range: (f64, f64),
) -> Result<EpipolarSegment, GeometryError> {
    let a = cam_ref.unproject(pixel, z_range.0)?;
    let b = cam_ref.unproject(pixel, z_range.1)?;
    let (ua, _) = cam_j.project(&a);
    let (ub, _) = cam_j.project(&b);
    let (t0, t1) = clip_segment(ua, ub, (cam_j.width - 1) as f64, (cam_j.height - 1) as f64)
        .ok_or(GeometryError::EmptySegment(cam_j.view_id))?;
    let lerp = |t: f64| ua + (ub - ua) * t;
    let zl = |t: f64| z_range.0 + (z_range.1 - z_range.0) * t;
    Ok(EpipolarSegment {
        start: lerp(t0),
        end: lerp(t1),
        depth_start: zl(t0),
        depth_end: zl(t1),
    })
}

/// Liang–Barsky clip of `a + t(b − a)`, `t ∈ [0, 1]`, against `[0, xmax] × [0, ymax]`.
fn clip_segment(a: Vec2, b: Vec2, xmax: f64, ymax: f64) -> Option<(f64, f64)> {
    let d = b - a;
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    let checks = [
        (-d.x, a.x),
        (d.x, xmax - a.x),
        (-d.y, a.y),
        (d.y, ymax - a.y),
    ];
    for (p, q) in checks {
        if p.abs() < 1e-15 {
            if q < 0.0 {
                return None;
            }
            continue;
        }
        let t = q / p;
        if p < 0.0 {
            t0 = t0.max(t);
        } else {
            t1 = t1.min(t);
        }
        if t0 > t1 {
            return None;
        }
    }
    Some((t0, t1))
}

/// Stratified sample offsets in `[−r, r]`: stratum midpoints, or one uniform
/// draw per stratum when `rng` is given.
pub fn stratified_offsets<R: Rng + ?Sized>(
    n_p: usize,
    r: f64,
    rng: Option<&mut R>,
) -> Result<Vec<f64>, GeometryError> {
    stratified_in(n_p, -r, r, rng).map_err(|_| GeometryError::BadSampling { n_p, r })
}

/// Stratified positions over `[lo, hi]`.
pub fn stratified_in<R: Rng + ?Sized>(
    n: usize,
    lo: f64,
    hi: f64,
    rng: Option<&mut R>,
) -> Result<Vec<f64>, GeometryError> {
    if n == 0 || !(hi > lo) {
        return Err(GeometryError::BadSampling { n_p: n, r: (hi - lo) / 2.0 });
    }
    let width = (hi - lo) / n as f64;
    Ok(match rng {
        None => (0..n).map(|k| lo + (k as f64 + 0.5) * width).collect(),
        Some(rng) => (0..n)
            .map(|k| lo + (k as f64 + rng.gen::<f64>()) * width)
            .collect(),
    })
}

/// Points sampled around a depth-lifted pixel and their projections.
#[derive(Clone, Debug, PartialEq)]
pub struct TruncatedSamples {
    /// The lifted pixel.
    pub anchor: Vec3,
    pub dir: Vec3,
    pub points: Vec<Vec3>,
    pub t_offsets: Vec<f64>,
    /// `uv[view][k]` for each camera passed in, in the order given.
    pub uv: Vec<Vec<Vec2>>,
    pub in_bounds: Vec<Vec<bool>>,
}

/// Lifts `pixel` to 3D at `depth` and samples `n_p` points in `[−r, r]`
/// along the reference viewing ray, projecting each into every camera of `cams`.
pub fn truncated_samples<R: Rng + ?Sized>(
    pixel: Vec2,
    depth: f64,
    cam_ref: &Camera,
    cams: &[&Camera],
    n_p: usize,
    r: f64,
    jitter: Option<&mut R>,
) -> Result<TruncatedSamples, GeometryError> {
    let anchor = cam_ref.unproject(pixel, depth)?;
    let t_offsets = stratified_offsets(n_p, r, jitter)?;
    Ok(samples_along(anchor, cam_ref.axis(), t_offsets, cams))
}

/// Samples the ray through `pixel` at the given absolute reference depths.
pub fn samples_at_depths(
    pixel: Vec2,
    depths: &[f64],
    cam_ref: &Camera,
    cams: &[&Camera],
) -> Result<TruncatedSamples, GeometryError> {
    let anchor = cam_ref.unproject(pixel, 0.0)?;
    Ok(samples_along(anchor, cam_ref.axis(), depths.to_vec(), cams))
}

fn samples_along(anchor: Vec3, dir: Vec3, t_offsets: Vec<f64>, cams: &[&Camera]) -> TruncatedSamples {
    let points: Vec<Vec3> = t_offsets.iter().map(|&t| anchor + dir * t).collect();
    let mut uv = Vec::with_capacity(cams.len());
    let mut in_bounds = Vec::with_capacity(cams.len());
    for cam in cams {
        let projected: Vec<Vec2> = points.iter().map(|p| cam.project(p).0).collect();
        in_bounds.push(projected.iter().map(|&q| cam.contains(q)).collect());
        uv.push(projected);
    }
    TruncatedSamples {
        anchor,
        dir,
        points,
        t_offsets,
        uv,
        in_bounds,
    }
}

/// Per-pixel depth along the camera axis with a validity mask.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f32>,
    pub valid: Vec<bool>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            values: vec![0.0; width * height],
            valid: vec![false; width * height],
        }
    }

    pub fn constant(width: usize, height: usize, value: f32) -> Self {
        Self {
            width,
            height,
            values: vec![value; width * height],
            valid: vec![true; width * height],
        }
    }

    #[inline]
    pub fn idx(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    /// Depth at a pixel, if valid.
    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        let i = self.idx(x, y);
        self.valid[i].then(|| self.values[i] as f64)
    }

    pub fn set(&mut self, x: usize, y: usize, value: Option<f32>) {
        let i = self.idx(x, y);
        match value {
            Some(v) => {
                self.values[i] = v;
                self.valid[i] = true;
            }
            None => {
                self.values[i] = 0.0;
                self.valid[i] = false;
            }
        }
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// True when every valid value is finite.
    pub fn is_consistent(&self) -> bool {
        self.values.len() == self.width * self.height
            && self.valid.len() == self.values.len()
            && self
                .values
                .iter()
                .zip(&self.valid)
                .all(|(v, &ok)| !ok || v.is_finite())
    }
}
