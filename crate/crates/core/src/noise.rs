//! Seeded synthetic noise. Results are left unclamped.

use crate::error::{GcpError, Result};
use crate::image::PlanarImage;
use crate::rng::PortableRng;

/// Adds white Gaussian noise of standard deviation `sigma` to every sample.
pub fn add_awgn(img: &PlanarImage, sigma: f64, seed: u64) -> Result<PlanarImage> {
    add_channel_awgn(img, &vec![sigma; img.channels()], seed)
}

/// White Gaussian noise with one standard deviation per channel. Samples are
/// drawn channel by channel in storage order.
pub fn add_channel_awgn(img: &PlanarImage, sigmas: &[f64], seed: u64) -> Result<PlanarImage> {
    if sigmas.len() != img.channels() {
        return Err(GcpError::mismatch(format!(
            "{} sigmas for {} channels",
            sigmas.len(),
            img.channels()
        )));
    }
    if sigmas.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return Err(GcpError::InvalidConfig(
            "noise levels must be finite and nonnegative".into(),
        ));
    }
    let mut rng = PortableRng::new(seed);
    let mut out = img.clone();
    for (c, &s) in sigmas.iter().enumerate() {
        for v in out.plane_mut(c) {
            *v += s * rng.normal();
        }
    }
    Ok(out)
}

/// Signal-dependent Gaussian noise with variance `shot * x + read`, where
/// `x` is the clean value clipped at zero.
pub fn add_heteroscedastic(img: &PlanarImage, shot: f64, read: f64, seed: u64) -> Result<PlanarImage> {
    if !(shot >= 0.0 && read >= 0.0) || !shot.is_finite() || !read.is_finite() {
        return Err(GcpError::InvalidConfig(
            "noise parameters must be finite and nonnegative".into(),
        ));
    }
    let mut rng = PortableRng::new(seed);
    let mut out = img.clone();
    for v in out.data_mut() {
        *v += (shot * v.max(0.0) + read).sqrt() * rng.normal();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::ChannelSemantics;

    fn flat(h: usize, w: usize, c: usize) -> PlanarImage {
        let sem = if c == 3 {
            ChannelSemantics::Srgb
        } else {
            ChannelSemantics::Gray
        };
        PlanarImage::filled(h, w, c, sem, 128.0).unwrap()
    }

    #[test]
    fn zero_sigma_is_identity() {
        let img = flat(8, 8, 3);
        assert_eq!(add_awgn(&img, 0.0, 3).unwrap(), img);
    }

    #[test]
    fn seeded_and_reproducible() {
        let img = flat(16, 16, 1);
        assert_eq!(add_awgn(&img, 5.0, 11).unwrap(), add_awgn(&img, 5.0, 11).unwrap());
        assert_ne!(add_awgn(&img, 5.0, 11).unwrap(), add_awgn(&img, 5.0, 12).unwrap());
    }

    #[test]
    fn variance_and_bias() {
        let img = flat(512, 512, 1);
        let noisy = add_awgn(&img, 25.0, 2024).unwrap();
        let d: Vec<f64> = noisy.data().iter().zip(img.data()).map(|(a, b)| a - b).collect();
        let n = d.len() as f64;
        let mean = d.iter().sum::<f64>() / n;
        let var = d.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 0.5, "{mean}");
        assert!((var / 625.0 - 1.0).abs() < 0.02, "{var}");
    }

    #[test]
    fn per_channel_levels() {
        let img = flat(64, 64, 3);
        let noisy = add_channel_awgn(&img, &[10.0, 0.0, 10.0], 1).unwrap();
        assert_eq!(noisy.plane(1), img.plane(1));
        assert_ne!(noisy.plane(0), img.plane(0));
        assert!(add_channel_awgn(&img, &[1.0], 1).is_err());
        assert!(add_awgn(&img, -1.0, 1).is_err());
    }

    #[test]
    fn heteroscedastic_scales_with_signal() {
        let dark = PlanarImage::filled(128, 128, 1, ChannelSemantics::Gray, 10.0).unwrap();
        let bright = PlanarImage::filled(128, 128, 1, ChannelSemantics::Gray, 200.0).unwrap();
        let spread = |img: &PlanarImage| {
            let n = add_heteroscedastic(img, 1.0, 1.0, 5).unwrap();
            n.data()
                .iter()
                .zip(img.data())
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                / img.data().len() as f64
        };
        let (vd, vb) = (spread(&dark), spread(&bright));
        assert!((vd / 11.0 - 1.0).abs() < 0.1, "{vd}");
        assert!((vb / 201.0 - 1.0).abs() < 0.1, "{vb}");
    }
}
