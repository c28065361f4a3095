use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

use welm_cli::synth::{synth_frames, SynthParams};
use welm_core::elm::{hidden_map, init_hidden, Activation};
use welm_core::features::{extract_feature_matrix, generate_projection, integral_image};
use welm_core::geometry::{sample_grid, sample_ring, BBox, RingSpec};
use welm_core::tracker::{self, TrackerConfig};
use welm_core::woselm::{label_matrix, woselm_init, Label, RegularizerMode, RhoMode};

fn bench_integral_image(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let img = welm_core::GrayImage::from_fn(320, 240, |_, _| rng.random_range(0..=255u32) as u8);
    c.bench_function("integral_image 320x240", |b| {
        b.iter(|| black_box(integral_image(black_box(&img))))
    });
}

fn bench_feature_extraction(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let img = welm_core::GrayImage::from_fn(320, 240, |_, _| rng.random_range(0..=255u32) as u8);
    let ii = integral_image(&img);
    let proj = generate_projection(3, 50, 40, 40);
    let center = BBox::new(140, 100, 40, 40);
    let boxes = sample_grid(&center, 20, 320, 240);
    c.bench_function("features for 41x41 candidate grid", |b| {
        b.iter(|| black_box(extract_feature_matrix(&ii, black_box(&boxes), &proj).unwrap()))
    });
}

fn bench_hidden_map(c: &mut Criterion) {
    let layer = init_hidden(4, 50, 300, Activation::Sigmoid);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = DMatrix::<f64>::from_fn(2635, 50, |_, _| rng.random_range(-1.0..1.0));
    c.bench_function("hidden map 2635x50 -> 300", |b| {
        b.iter(|| black_box(hidden_map(&layer, black_box(&x)).unwrap()))
    });
}

fn bench_woselm_update(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let nh = 300;
    let n = 2635;
    let h0 = DMatrix::<f64>::from_fn(400, nh, |_, _| rng.random_range(0.0..1.0));
    let labels0: Vec<Label> = (0..400)
        .map(|i| if i < 9 { Label::Pos } else { Label::Neg })
        .collect();
    let t0 = label_matrix(&labels0);
    let state =
        woselm_init(&h0, &t0, &labels0, 1e4, RegularizerMode::Accumulate, RhoMode::RatioDrift).unwrap();
    let hd = DMatrix::<f64>::from_fn(n, nh, |_, _| rng.random_range(0.0..1.0));
    let labels: Vec<Label> =
        (0..n).map(|i| if i < 9 { Label::Pos } else { Label::Neg }).collect();
    let td = label_matrix(&labels);
    c.bench_function("weighted online update, 2635-sample chunk", |b| {
        b.iter_batched(
            || state.clone(),
            |mut s| {
                s.update(black_box(&hd), black_box(&td), &labels).unwrap();
                black_box(s)
            },
            BatchSize::LargeInput,
        )
    });
}

fn bench_ring_sampling(c: &mut Criterion) {
    let center = BBox::new(140, 100, 40, 40);
    let spec = RingSpec::new(8, 30, 70, 70, 1);
    c.bench_function("negative ring sampling", |b| {
        b.iter(|| black_box(sample_ring(black_box(&center), &spec, 320, 240)))
    });
}

fn bench_tracker_step(c: &mut Criterion) {
    let params = SynthParams { frames: 2, ..SynthParams::default() };
    let (frames, gt) = synth_frames(&params).unwrap();
    let state = tracker::init(&frames[0], gt[0], TrackerConfig::default()).unwrap();
    c.bench_function("full tracker step 320x240", |b| {
        b.iter_batched(
            || state.clone(),
            |mut s| {
                black_box(s.step(&frames[1]).unwrap());
                black_box(s)
            },
            BatchSize::LargeInput,
        )
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = bench_integral_image, bench_feature_extraction, bench_hidden_map,
              bench_woselm_update, bench_ring_sampling, bench_tracker_step
}
criterion_main!(benches);
