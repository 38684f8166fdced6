use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{create_dir, io_err, write_json, ExperimentConfig, Result};
use crate::attention::{
    full_epipolar_attention, truncated_epipolar_attention, AttentionConfig, AttentionWeights, DecoderConfig,
    FeatureMap, MultiViewSet,
};
use crate::geometry::{make_rig, DepthMap, ViewId, RIG_RADIUS};
use crate::metrics::{cost_model, CostMode};
use crate::tensorcore::Tensor;

pub const COST_CSV: &str = "cost.csv";
pub const TIMING_CSV: &str = "timing.csv";
pub const BENCH_SUMMARY: &str = "bench_summary.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub mode: CostMode,
    pub resolution: usize,
    pub keys_per_query: usize,
    pub kv_floats: u64,
    pub attention_flops: u64,
    pub kv_bytes: u64,
    /// Full-to-truncated key/value ratio at this resolution.
    pub full_over_truncated: f64,
    pub feasible: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub mode: CostMode,
    pub resolution: usize,
    pub pixels: usize,
    pub keys_per_query: usize,
    /// Fastest of the repeats.
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub costs: Vec<CostRow>,
    pub timings: Vec<TimingRow>,
    /// Coefficient of determination of truncated time against pixel count.
    pub truncated_time_r2: f64,
    pub kv_budget_bytes: u64,
}

/// Least-squares line through `(x, y)`; returns its R².
pub fn linear_fit_r2(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy * sxy / (sxx * syy)
}

fn cost_rows(cfg: &ExperimentConfig) -> Vec<CostRow> {
    let mut rows = Vec::new();
    for mode in [CostMode::Truncated, CostMode::Full] {
        for &res in &cfg.bench_resolutions {
            let r = cost_model(mode, res, cfg.bench_views, cfg.bench_d, cfg.bench_n_p, res, 4);
            let t = cost_model(CostMode::Truncated, res, cfg.bench_views, cfg.bench_d, cfg.bench_n_p, res, 4);
            let f = cost_model(CostMode::Full, res, cfg.bench_views, cfg.bench_d, cfg.bench_n_p, res, 4);
            rows.push(CostRow {
                mode,
                resolution: res,
                keys_per_query: r.levels[0].keys_per_query,
                kv_floats: r.total_kv_floats,
                attention_flops: r.total_attention_flops,
                kv_bytes: r.total_kv_bytes,
                full_over_truncated: f.total_kv_floats as f64 / t.total_kv_floats as f64,
                feasible: r.total_kv_bytes <= cfg.kv_budget_bytes,
            });
        }
    }
    rows
}

fn time_forward(mode: CostMode, res: usize, cfg: &ExperimentConfig) -> Result<TimingRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(res as u64);
    let cams = make_rig(cfg.ortho_scale, res);
    let d = cfg.timing_d;
    let features = cams
        .iter()
        .map(|c| {
            let t = Tensor::from_fn(&[d, res, res], |_| rng.gen_range(-1.0f32..1.0));
            FeatureMap::new(t, c.view_id, 1)
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let set = MultiViewSet::new(cams, features)?;
    let mut depth = DepthMap::new(res, res);
    for y in 0..res {
        for x in 0..res {
            depth.set(x, y, Some(rng.gen_range(RIG_RADIUS as f32 - 0.5..RIG_RADIUS as f32 + 0.5)));
        }
    }
    let acfg = AttentionConfig {
        n_p: cfg.bench_n_p,
        d,
        ..AttentionConfig::default()
    };
    let weights = AttentionWeights::<f32>::init(&acfg, ViewId::ALL.len() - 1, &mut rng);
    let z_range = DecoderConfig::default().z_range;
    let mut best = f64::INFINITY;
    for _ in 0..cfg.timing_repeats.max(1) {
        let start = Instant::now();
        let out = match mode {
            CostMode::Truncated => truncated_epipolar_attention(&set, ViewId::Front, &depth, &acfg, &weights)?,
            CostMode::Full => full_epipolar_attention(&set, ViewId::Front, z_range, res, &acfg, &weights)?,
        };
        best = best.min(start.elapsed().as_secs_f64());
        std::hint::black_box(out);
    }
    Ok(TimingRow {
        mode,
        resolution: res,
        pixels: res * res,
        keys_per_query: match mode {
            CostMode::Truncated => cfg.bench_n_p,
            CostMode::Full => res,
        },
        seconds: best,
    })
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

/// Analytic cost table for both modes plus measured forward times of the
/// truncated and full blocks at the timing resolutions.
pub fn cmd_bench(cfg: &ExperimentConfig, out_dir: &Path) -> Result<BenchReport> {
    create_dir(out_dir)?;
    let costs = cost_rows(cfg);
    let mut timings = Vec::new();
    for mode in [CostMode::Truncated, CostMode::Full] {
        for &res in &cfg.timing_resolutions {
            timings.push(time_forward(mode, res, cfg)?);
        }
    }
    let (px, secs): (Vec<f64>, Vec<f64>) = timings
        .iter()
        .filter(|t| t.mode == CostMode::Truncated)
        .map(|t| (t.pixels as f64, t.seconds))
        .unzip();
    let report = BenchReport {
        costs,
        timings,
        truncated_time_r2: linear_fit_r2(&px, &secs),
        kv_budget_bytes: cfg.kv_budget_bytes,
    };
    write_csv(&out_dir.join(COST_CSV), &report.costs)?;
    write_csv(&out_dir.join(TIMING_CSV), &report.timings)?;
    write_json(&out_dir.join(BENCH_SUMMARY), &report)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn r2_of_exact_and_noisy_lines() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert!((linear_fit_r2(&x, &[3.0, 5.0, 7.0, 9.0]) - 1.0).abs() < 1e-12);
        assert!(linear_fit_r2(&x, &[1.0, -1.0, 1.0, -1.0]) < 0.5);
    }

    #[test]
    fn cost_table_marks_full_attention_beyond_budget() {
        let cfg = ExperimentConfig::default();
        let rows = cost_rows(&cfg);
        let truncated: Vec<_> = rows.iter().filter(|r| r.mode == CostMode::Truncated).collect();
        assert_eq!(truncated.len(), 4);
        assert!(truncated.iter().all(|r| r.feasible));
        let full: Vec<_> = rows.iter().filter(|r| r.mode == CostMode::Full).collect();
        let feasible: Vec<usize> = full.iter().filter(|r| r.feasible).map(|r| r.resolution).collect();
        assert_eq!(feasible, vec![32, 64, 128]);
        for r in &rows {
            assert_eq!(r.full_over_truncated, r.resolution as f64 / cfg.bench_n_p as f64);
        }
    }
}
