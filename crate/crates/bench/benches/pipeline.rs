use std::hint::black_box;
use std::sync::Arc;

use arsentry_core::baseline::{CannyParams, compute_canny, compute_saliency};
use arsentry_core::eval::synth::{SynthOptions, generate_obstruction_dataset, obstruction_scene};
use arsentry_core::eval::{Dataset, TaskKind, ground_truth_backend, load_dataset};
use arsentry_core::gateway::rle;
use arsentry_core::obstruction::detect_obstruction;
use arsentry_core::{
    Backends, DiffConfig, KeyObjectList, ObstructionConfig, extract_virtual_mask, mask_intersection_area, mask_iou,
};
use criterion::{BenchmarkId, Criterion, criterion_group, criterion_main};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const SIZES: [(u32, u32); 2] = [(320, 240), (640, 480)];

fn opts(width: u32, height: u32) -> SynthOptions {
    SynthOptions {
        width,
        height,
        ..SynthOptions::default()
    }
}

fn imaging(c: &mut Criterion) {
    let mut g = c.benchmark_group("imaging");
    for (w, h) in SIZES {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = obstruction_scene(&mut rng, &opts(w, h)).unwrap();
        let label = format!("{w}x{h}");
        g.bench_with_input(BenchmarkId::new("extract_mask", &label), &s, |b, s| {
            b.iter(|| extract_virtual_mask(black_box(&s.raw), black_box(&s.aug), DiffConfig::default()).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("intersection", &label), &s, |b, s| {
            b.iter(|| mask_intersection_area(black_box(&s.key_mask), black_box(&s.content_mask)).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("iou", &label), &s, |b, s| {
            b.iter(|| mask_iou(black_box(&s.key_mask), black_box(&s.content_mask)).unwrap())
        });
        let encoded = rle::encode(&s.content_mask);
        g.bench_with_input(BenchmarkId::new("rle_encode", &label), &s, |b, s| {
            b.iter(|| rle::encode(black_box(&s.content_mask)))
        });
        g.bench_with_input(BenchmarkId::new("rle_decode", &label), &encoded, |b, e| {
            b.iter(|| rle::decode(black_box(e)).unwrap())
        });
    }
    g.finish();
}

fn baselines(c: &mut Criterion) {
    let mut g = c.benchmark_group("baselines");
    g.sample_size(20);
    for (w, h) in SIZES {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = obstruction_scene(&mut rng, &opts(w, h)).unwrap();
        let label = format!("{w}x{h}");
        g.bench_with_input(BenchmarkId::new("saliency", &label), &s.raw, |b, raw| {
            b.iter(|| compute_saliency(black_box(raw)).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("canny", &label), &s.raw, |b, raw| {
            b.iter(|| compute_canny(black_box(raw), &CannyParams::default()).unwrap())
        });
    }
    g.finish();
}

/// Full obstruction check against an instant scripted backend: everything
/// but model inference.
fn frame_check(c: &mut Criterion) {
    let dir = tempfile::tempdir().unwrap();
    generate_obstruction_dataset(dir.path(), 1, 3, &opts(640, 480)).unwrap();
    let ds = load_dataset(dir.path(), TaskKind::Obstruction).unwrap();
    let Dataset::Obstruction { samples, .. } = &ds else { unreachable!() };
    let pair = samples[0].load_pair().unwrap();
    let keys = KeyObjectList::from_names([samples[0].key_object.as_str()]);
    let backends = Backends::uniform(Arc::new(ground_truth_backend(&ds).unwrap()));
    let cfg = ObstructionConfig::default();
    let rt = tokio::runtime::Builder::new_current_thread().enable_time().build().unwrap();
    c.bench_function("frame_check/640x480", |b| {
        b.iter(|| rt.block_on(detect_obstruction(black_box(&pair), &keys, &backends, &cfg)).unwrap())
    });
}

criterion_group!(benches, imaging, baselines, frame_check);
criterion_main!(benches);
