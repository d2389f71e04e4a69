//! PSNR, SSIM and per-channel SNR.

use serde::{Serialize, Serializer};

use crate::error::{GcpError, Result};
use crate::image::PlanarImage;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;

fn same_shape(a: &PlanarImage, b: &PlanarImage) -> Result<()> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(GcpError::mismatch(format!(
            "{}x{}x{} vs {}x{}x{}",
            a.height(),
            a.width(),
            a.channels(),
            b.height(),
            b.width(),
            b.channels()
        )))
    }
}

fn ratio_db(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (num / den).log10()
    }
}

/// `10 log10(peak^2 / MSE)` over every sample; infinite for identical
/// images.
pub fn psnr(reference: &PlanarImage, test: &PlanarImage, peak: f64) -> Result<f64> {
    same_shape(reference, test)?;
    let n = reference.data().len() as f64;
    let sse: f64 = reference
        .data()
        .iter()
        .zip(test.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(ratio_db(peak * peak, sse / n))
}

fn gaussian(len: usize) -> Vec<f64> {
    let c = (len as f64 - 1.0) / 2.0;
    let w: Vec<f64> = (0..len)
        .map(|i| (-(i as f64 - c).powi(2) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Separable weighted sums over every fully contained window.
fn filter_valid(plane: &[f64], h: usize, w: usize, kr: &[f64], kc: &[f64]) -> Vec<f64> {
    let (oh, ow) = (h - kr.len() + 1, w - kc.len() + 1);
    let mut tmp = vec![0.0; h * ow];
    for r in 0..h {
        let row = &plane[r * w..(r + 1) * w];
        for c in 0..ow {
            tmp[r * ow + c] = kc.iter().zip(&row[c..]).map(|(k, v)| k * v).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for (i, k) in kr.iter().enumerate() {
            let src = &tmp[(r + i) * ow..(r + i + 1) * ow];
            for (o, v) in out[r * ow..(r + 1) * ow].iter_mut().zip(src) {
                *o += k * v;
            }
        }
    }
    out
}

fn ssim_plane(x: &[f64], y: &[f64], h: usize, w: usize) -> f64 {
    let c1 = (0.01f64 * 255.0).powi(2);
    let c2 = (0.03f64 * 255.0).powi(2);
    // images smaller than the window use a window cropped to the image
    let kr = gaussian(SSIM_WINDOW.min(h));
    let kc = gaussian(SSIM_WINDOW.min(w));
    let prod = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).collect::<Vec<_>>();
    let mx = filter_valid(x, h, w, &kr, &kc);
    let my = filter_valid(y, h, w, &kr, &kc);
    let sxx = filter_valid(&prod(x, x), h, w, &kr, &kc);
    let syy = filter_valid(&prod(y, y), h, w, &kr, &kc);
    let sxy = filter_valid(&prod(x, y), h, w, &kr, &kc);
    let mut total = 0.0;
    for i in 0..mx.len() {
        let (ux, uy) = (mx[i], my[i]);
        let vx = sxx[i] - ux * ux;
        let vy = syy[i] - uy * uy;
        let cov = sxy[i] - ux * uy;
        total += ((2.0 * ux * uy + c1) * (2.0 * cov + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
    }
    total / mx.len() as f64
}

/// Mean SSIM with an 11x11 Gaussian window (sigma 1.5), computed per
/// channel over valid windows and averaged across channels.
pub fn ssim(reference: &PlanarImage, test: &PlanarImage) -> Result<f64> {
    same_shape(reference, test)?;
    let (h, w) = (reference.height(), reference.width());
    if h == 0 || w == 0 {
        return Err(GcpError::EmptyImage);
    }
    let c = reference.channels();
    Ok((0..c)
        .map(|ch| ssim_plane(reference.plane(ch), test.plane(ch), h, w))
        .sum::<f64>()
        / c as f64)
}

/// Per-channel `10 log10(sum clean^2 / sum (clean - noisy)^2)` of a
/// three-channel pair.
pub fn channel_snr(clean: &PlanarImage, noisy: &PlanarImage) -> Result<[f64; 3]> {
    same_shape(clean, noisy)?;
    if clean.channels() != 3 {
        return Err(GcpError::UnsupportedChannels(format!(
            "channel SNR needs three channels, got {}",
            clean.channels()
        )));
    }
    let mut out = [0.0; 3];
    for (c, o) in out.iter_mut().enumerate() {
        let (a, b) = (clean.plane(c), noisy.plane(c));
        let signal: f64 = a.iter().map(|v| v * v).sum();
        let noise: f64 = a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum();
        *o = ratio_db(signal, noise);
    }
    Ok(out)
}

/// Writes infinite values as the string `"inf"`, which JSON cannot express
/// as a number.
pub fn serialize_db<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() && *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

fn serialize_db_triple<S: Serializer>(v: &Option<[f64; 3]>, s: S) -> std::result::Result<S::Ok, S::Error> {
    #[derive(Serialize)]
    struct Db(#[serde(serialize_with = "serialize_db")] f64);
    match v {
        Some(t) => s.collect_seq(t.iter().map(|&x| Db(x))),
        None => s.serialize_none(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricReport {
    #[serde(serialize_with = "serialize_db")]
    pub psnr: f64,
    pub ssim: f64,
    #[serde(serialize_with = "serialize_db_triple", skip_serializing_if = "Option::is_none")]
    pub per_channel_snr: Option<[f64; 3]>,
}

impl MetricReport {
    /// PSNR and SSIM against `reference`, plus channel SNR for three-channel
    /// images.
    pub fn compare(reference: &PlanarImage, test: &PlanarImage) -> Result<Self> {
        Ok(Self {
            psnr: psnr(reference, test, 255.0)?,
            ssim: ssim(reference, test)?,
            per_channel_snr: if reference.channels() == 3 {
                Some(channel_snr(reference, test)?)
            } else {
                None
            },
        })
    }
}
