//! Sequential against rayon execution of the same denoising work.
//!
//! `cargo bench -p gcpid`; build with `--no-default-features` to see the
//! parallel arm fall back to sequential.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use gcpid::config::DenoiseConfig;
use gcpid::noise::add_awgn;
use gcpid::parallel::Execution;
use gcpid::pipeline::{denoise_srgb, denoise_video, VideoConfig};
use gcpid::search::{search_group, PatchOrigin};
use gcpid::synth::piecewise_smooth_chart;

fn executions() -> [(&'static str, Execution); 2] {
    [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)]
}

fn srgb(c: &mut Criterion) {
    let mut group = c.benchmark_group("denoise_srgb");
    group.sample_size(10);
    for size in [64usize, 128] {
        let noisy = add_awgn(&piecewise_smooth_chart(size, size, 1).unwrap(), 25.0, 2).unwrap();
        for (name, execution) in executions() {
            let cfg = DenoiseConfig {
                execution,
                ..DenoiseConfig::with_sigma(25.0)
            };
            group.bench_with_input(BenchmarkId::new(name, size), &noisy, |b, img| {
                b.iter(|| denoise_srgb(black_box(img), &cfg).unwrap())
            });
        }
    }
    group.finish();
}

fn video(c: &mut Criterion) {
    let mut group = c.benchmark_group("denoise_video");
    group.sample_size(10);
    let frames: Vec<_> = (0..3)
        .map(|i| add_awgn(&piecewise_smooth_chart(64, 64, 3).unwrap(), 25.0, i).unwrap())
        .collect();
    for (name, execution) in executions() {
        let vcfg = VideoConfig::new(
            DenoiseConfig {
                execution,
                ..DenoiseConfig::with_sigma(25.0)
            },
            3,
        );
        group.bench_function(name, |b| b.iter(|| denoise_video(black_box(&frames), &vcfg).unwrap()));
    }
    group.finish();
}

fn search(c: &mut Criterion) {
    let img = add_awgn(&piecewise_smooth_chart(64, 64, 5).unwrap(), 25.0, 6).unwrap();
    let cfg = DenoiseConfig::default();
    c.bench_function("search_group", |b| {
        b.iter(|| search_group(black_box(&img), PatchOrigin::new(28, 28), &cfg).unwrap())
    });
}

criterion_group!(benches, srgb, video, search);
criterion_main!(benches);
