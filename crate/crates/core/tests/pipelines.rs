use std::sync::Arc;

use gcpid::config::{DenoiseConfig, SigmaSource};
use gcpid::estimator::{estimate_sigma_map, NoiseClassifier, SigmaGrid};
use gcpid::metrics::psnr;
use gcpid::noise::add_awgn;
use gcpid::parallel::Execution;
use gcpid::pipeline::{
    denoise_hsi, denoise_hsi_traced, denoise_raw, denoise_srgb, denoise_video, hsi_medium_group, BayerLayout,
    HsiConfig, VideoConfig,
};
use gcpid::search::{search_group, PatchOrigin};
use gcpid::synth::{mosaic_from_rgb, piecewise_smooth_chart, textured_chart};
use gcpid::{ChannelSemantics, GcpError, PlanarImage};

fn small() -> DenoiseConfig {
    DenoiseConfig {
        patch_size: 6,
        window: 12,
        group_size: 12,
        stride: 3,
        ..DenoiseConfig::with_sigma(20.0)
    }
}

fn cube(bands: usize, seed: u64) -> PlanarImage {
    let base = piecewise_smooth_chart(40, 40, seed).unwrap();
    PlanarImage::from_fn(40, 40, bands, ChannelSemantics::Hsi, |b, r, c| {
        base.get(b % 3, r, c) * (0.6 + 0.04 * b as f64)
    })
    .unwrap()
}

#[test]
fn hsi_groups_share_the_medium_search() {
    let clean = cube(10, 3);
    let noisy = add_awgn(&clean, 15.0, 4).unwrap();
    let (out, trace) = denoise_hsi_traced(&noisy, &HsiConfig { base: small() }).unwrap();
    assert_eq!(trace.medium, hsi_medium_group(10));
    assert_eq!(trace.medium, 1);
    assert_eq!(trace.origins.len(), 3);
    assert!(trace.origins.iter().all(|g| g == &trace.origins[trace.medium]));
    assert!(trace.origins[0].iter().all(|members| members.len() == 12));
    assert!(psnr(&clean, &out, 255.0).unwrap() > psnr(&clean, &noisy, 255.0).unwrap());
    assert_eq!(out, denoise_hsi(&noisy, &HsiConfig { base: small() }).unwrap());
}

#[test]
fn thread_count_does_not_change_output() {
    let clean = piecewise_smooth_chart(48, 48, 9).unwrap();
    let noisy = add_awgn(&clean, 20.0, 10).unwrap();
    let run = |execution| denoise_srgb(&noisy, &DenoiseConfig { execution, ..small() }).unwrap();
    let seq = run(Execution::Sequential);
    assert_eq!(seq, run(Execution::Threads(3)));
    assert_eq!(seq, run(Execution::Parallel));
}

#[test]
fn video_with_one_frame_windows_matches_images() {
    let frames: Vec<_> = (0..3)
        .map(|i| add_awgn(&piecewise_smooth_chart(32, 32, i).unwrap(), 15.0, 20 + i).unwrap())
        .collect();
    let cfg = DenoiseConfig {
        execution: Execution::Sequential,
        ..small()
    };
    let out = denoise_video(&frames, &VideoConfig::new(cfg.clone(), 1)).unwrap();
    for (o, f) in out.iter().zip(&frames) {
        assert_eq!(o, &denoise_srgb(f, &cfg).unwrap());
    }
    assert!(VideoConfig::new(cfg.clone(), 2).validate().is_err());
    assert!(denoise_video(&frames, &VideoConfig::new(cfg, 4)).is_err());
}

#[test]
fn raw_denoising_reduces_error() {
    let rgb = piecewise_smooth_chart(64, 64, 12).unwrap();
    let mosaic = mosaic_from_rgb(&rgb, BayerLayout::Grbg).unwrap();
    let noisy = add_awgn(&mosaic, 20.0, 13).unwrap();
    let out = denoise_raw(&noisy, BayerLayout::Grbg, &small()).unwrap();
    assert_eq!((out.height(), out.width(), out.channels()), (64, 64, 1));
    let gain = psnr(&mosaic, &out, 255.0).unwrap() - psnr(&mosaic, &noisy, 255.0).unwrap();
    assert!(gain > 3.0, "{gain}");
}

#[test]
fn sigma_maps_are_checked_against_frames() {
    let img = add_awgn(&piecewise_smooth_chart(40, 40, 2).unwrap(), 10.0, 3).unwrap();
    let net = NoiseClassifier::seeded(SigmaGrid::srgb(), 1);
    let map = estimate_sigma_map(&img, &net, Execution::Sequential).unwrap();

    let by_map = DenoiseConfig {
        sigma: SigmaSource::Maps(Arc::new(vec![map.clone()])),
        ..small()
    };
    let by_net = DenoiseConfig {
        sigma: SigmaSource::Estimated(Arc::new(net)),
        ..small()
    };
    let fixed = small().with_fixed_sigma(map.smoothed[0]);
    let out = denoise_srgb(&img, &by_map).unwrap();
    assert_eq!(out, denoise_srgb(&img, &by_net).unwrap());
    // a single-tile image has one level everywhere
    assert_eq!(out, denoise_srgb(&img, &fixed).unwrap());

    let two = DenoiseConfig {
        sigma: SigmaSource::Maps(Arc::new(vec![map.clone(), map])),
        ..small()
    };
    assert!(matches!(denoise_srgb(&img, &two), Err(GcpError::DimensionMismatch(_))));
    let other = piecewise_smooth_chart(48, 40, 2).unwrap();
    assert!(denoise_srgb(&other, &by_map).is_err());
}

#[test]
fn groups_are_ordered_by_distance() {
    let img = add_awgn(&textured_chart(48, 48, 5, 30.0).unwrap(), 10.0, 6).unwrap();
    let cfg = DenoiseConfig::default();
    for origin in [
        PatchOrigin::new(0, 0),
        PatchOrigin::new(20, 17),
        PatchOrigin::new(40, 40),
    ] {
        let g = search_group(&img, origin, &cfg).unwrap();
        assert_eq!(g.len(), cfg.group_size);
        assert_eq!(g.patches[0].origin, origin);
        assert_eq!(g.distances[0], 0.0);
        assert!(g.distances[1..].windows(2).all(|w| w[0] <= w[1]));
        let mut seen = g.origins();
        seen.sort_by_key(|o| (o.row, o.col));
        seen.dedup();
        assert_eq!(seen.len(), g.len());
    }
}

#[test]
fn rejects_wrong_channel_layouts() {
    let gray = PlanarImage::filled(16, 16, 1, ChannelSemantics::Gray, 1.0).unwrap();
    assert!(matches!(
        denoise_srgb(&gray, &small()),
        Err(GcpError::UnsupportedChannels(_))
    ));
    let odd = PlanarImage::filled(15, 16, 1, ChannelSemantics::Gray, 1.0).unwrap();
    assert!(denoise_raw(&odd, BayerLayout::Rggb, &small()).is_err());
    let bad = DenoiseConfig {
        patch_size: 30,
        ..small()
    };
    assert!(matches!(
        denoise_srgb(&piecewise_smooth_chart(40, 40, 1).unwrap(), &bad),
        Err(GcpError::InvalidConfig(_))
    ));
}
