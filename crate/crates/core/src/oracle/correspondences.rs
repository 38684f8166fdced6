use crate::geometry::Vec2;
use crate::synthscene::{RenderedView, Scene, CORR_DEPTH_TOL};

/// Correspondences found by trying every pixel pair and checking
/// visibility by casting a ray into the scene, with no depth maps of the
/// target view involved.
pub fn brute_force_correspondences(
    scene: &Scene,
    view_i: &RenderedView,
    view_j: &RenderedView,
) -> Vec<((usize, usize), (usize, usize))> {
    let cam_j = &view_j.camera;
    let mut out = Vec::new();
    for y in 0..view_i.depth.height {
        for x in 0..view_i.depth.width {
            let Some(d) = view_i.depth.get(x, y) else { continue };
            let Ok(world) = view_i.camera.unproject(Vec2::new(x as f64, y as f64), d) else { continue };
            let (uv, z) = cam_j.project(&world);
            'pairs: for qy in 0..cam_j.height {
                for qx in 0..cam_j.width {
                    let near = (uv.x - qx as f64).abs() <= 0.5 && (uv.y - qy as f64).abs() <= 0.5;
                    if !near || !cam_j.contains(uv) {
                        continue;
                    }
                    let visible = scene
                        .hit(&cam_j.ray(uv))
                        .is_some_and(|(t, _)| (t - z).abs() < CORR_DEPTH_TOL);
                    if visible {
                        out.push(((x, y), (qx, qy)));
                    }
                    break 'pairs;
                }
            }
        }
    }
    out
}
