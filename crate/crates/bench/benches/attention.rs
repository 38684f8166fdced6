use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mvalign_core::attention::{
    full_epipolar_attention, truncated_epipolar_attention, AttentionConfig, AttentionWeights, DecoderConfig,
    FeatureMap, MultiViewSet,
};
use mvalign_core::geometry::{make_rig, DepthMap, ViewId, RIG_RADIUS};
use mvalign_core::tensorcore::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const D: usize = 8;
const N_P: usize = 2;

fn setup(res: usize) -> (MultiViewSet<f32>, DepthMap, AttentionConfig, AttentionWeights<f32>) {
    let mut rng = ChaCha8Rng::seed_from_u64(res as u64);
    let cams = make_rig(1.0, res);
    let features = cams
        .iter()
        .map(|c| FeatureMap::new(Tensor::from_fn(&[D, res, res], |_| rng.gen_range(-1.0f32..1.0)), c.view_id, 1))
        .collect::<Result<Vec<_>, _>>()
        .unwrap();
    let set = MultiViewSet::new(cams, features).unwrap();
    let mut depth = DepthMap::new(res, res);
    for y in 0..res {
        for x in 0..res {
            depth.set(x, y, Some(rng.gen_range(RIG_RADIUS as f32 - 0.5..RIG_RADIUS as f32 + 0.5)));
        }
    }
    let cfg = AttentionConfig {
        n_p: N_P,
        d: D,
        ..AttentionConfig::default()
    };
    let weights = AttentionWeights::init(&cfg, ViewId::ALL.len() - 1, &mut rng);
    (set, depth, cfg, weights)
}

fn attention(c: &mut Criterion) {
    let z_range = DecoderConfig::default().z_range;
    let mut group = c.benchmark_group("attention_forward");
    group.sample_size(10);
    for res in [16, 32, 48] {
        let (set, depth, cfg, weights) = setup(res);
        group.bench_with_input(BenchmarkId::new("truncated", res), &res, |b, _| {
            b.iter(|| truncated_epipolar_attention(black_box(&set), ViewId::Front, &depth, &cfg, &weights).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("full", res), &res, |b, &res| {
            b.iter(|| full_epipolar_attention(black_box(&set), ViewId::Front, z_range, res, &cfg, &weights).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, attention);
criterion_main!(benches);
