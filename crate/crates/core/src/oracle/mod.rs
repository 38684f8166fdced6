//! Independent reference implementations used to cross-check the fast paths:
//! finite differences, naive loops and brute-force enumerations. Nothing in
//! here is called by the production code paths.

mod attention;
mod correspondences;
mod image_metrics;
pub mod finite_diff;

pub use attention::brute_force_attention;
pub use correspondences::brute_force_correspondences;
pub use image_metrics::{naive_psnr, naive_ssim};

pub use finite_diff::{check_gradients, worst_rel_err, GradComparison, FD_STEP};

/// Triple-loop matrix product on row-major `f64` data.
pub fn naive_matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            for p in 0..k {
                c[i * n + j] += a[i * k + p] * b[p * n + j];
            }
        }
    }
    c
}

/// `exp(x_i) / Σ exp(x_j)` without stabilization tricks beyond a max shift.
pub fn direct_softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}
