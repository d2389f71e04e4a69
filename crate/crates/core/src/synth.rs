//! Generated test content.

use crate::error::{GcpError, Result};
use crate::image::{ChannelSemantics, PlanarImage};
use crate::pipeline::BayerLayout;
use crate::rng::PortableRng;

enum Shape {
    Rect { r0: f64, c0: f64, r1: f64, c1: f64 },
    Disk { r: f64, c: f64, radius: f64 },
}

impl Shape {
    fn contains(&self, r: f64, c: f64) -> bool {
        match *self {
            Shape::Rect { r0, c0, r1, c1 } => r >= r0 && r < r1 && c >= c0 && c < c1,
            Shape::Disk { r: rr, c: cc, radius } => (r - rr).powi(2) + (c - cc).powi(2) < radius * radius,
        }
    }
}

struct Region {
    shape: Shape,
    base: [f64; 3],
    slope: [[f64; 2]; 3],
}

/// An sRGB chart of smoothly shaded rectangles and disks over a gradient
/// background. Values stay within `[20, 235]`.
pub fn piecewise_smooth_chart(height: usize, width: usize, seed: u64) -> Result<PlanarImage> {
    if height == 0 || width == 0 {
        return Err(GcpError::EmptyImage);
    }
    let mut rng = PortableRng::new(seed);
    let (h, w) = (height as f64, width as f64);
    let color = |rng: &mut PortableRng| [0; 3].map(|_| 40.0 + 175.0 * rng.next_f64());
    let background = color(&mut rng);
    let bg_slope = [0; 3].map(|_| [40.0 * (rng.next_f64() - 0.5) / h, 40.0 * (rng.next_f64() - 0.5) / w]);
    let count = 6 + (height * width / 4096).min(18);
    let mut regions = Vec::with_capacity(count);
    for i in 0..count {
        let shape = if i % 2 == 0 {
            let (r0, c0) = (rng.next_f64() * h * 0.8, rng.next_f64() * w * 0.8);
            let (dh, dw) = ((0.1 + 0.3 * rng.next_f64()) * h, (0.1 + 0.3 * rng.next_f64()) * w);
            Shape::Rect {
                r0,
                c0,
                r1: r0 + dh,
                c1: c0 + dw,
            }
        } else {
            Shape::Disk {
                r: rng.next_f64() * h,
                c: rng.next_f64() * w,
                radius: (0.05 + 0.15 * rng.next_f64()) * h.min(w),
            }
        };
        let base = color(&mut rng);
        let slope = [0; 3].map(|_| [30.0 * (rng.next_f64() - 0.5) / h, 30.0 * (rng.next_f64() - 0.5) / w]);
        regions.push(Region { shape, base, slope });
    }
    PlanarImage::from_fn(height, width, 3, ChannelSemantics::Srgb, |ch, r, c| {
        let (rf, cf) = (r as f64, c as f64);
        // later regions paint over earlier ones
        let v = match regions.iter().rev().find(|reg| reg.shape.contains(rf, cf)) {
            Some(reg) => reg.base[ch] + reg.slope[ch][0] * (rf - h / 2.0) + reg.slope[ch][1] * (cf - w / 2.0),
            None => background[ch] + bg_slope[ch][0] * (rf - h / 2.0) + bg_slope[ch][1] * (cf - w / 2.0),
        };
        v.clamp(20.0, 235.0)
    })
}

/// [`piecewise_smooth_chart`] plus an oriented sinusoidal texture shared by
/// all channels with gains R 0.8, G 1.0, B 0.7. `amplitude` scales the
/// texture on the 8-bit scale.
pub fn textured_chart(height: usize, width: usize, seed: u64, amplitude: f64) -> Result<PlanarImage> {
    let base = piecewise_smooth_chart(height, width, seed)?;
    let mut rng = PortableRng::new(seed ^ 0x7e47_u64);
    let waves: Vec<[f64; 4]> = (0..6)
        .map(|_| {
            let f = 0.05 + 0.4 * rng.next_f64();
            let theta = rng.next_f64() * std::f64::consts::PI;
            [
                f * theta.cos(),
                f * theta.sin(),
                rng.next_f64() * std::f64::consts::TAU,
                0.5 + rng.next_f64(),
            ]
        })
        .collect();
    let gain = [0.8, 1.0, 0.7];
    PlanarImage::from_fn(height, width, 3, ChannelSemantics::Srgb, |ch, r, c| {
        let t: f64 = waves
            .iter()
            .map(|&[a, b, p, g]| g * (a * r as f64 + b * c as f64 + p).sin())
            .sum::<f64>()
            / 3.0;
        (base.get(ch, r, c) + amplitude * gain[ch] * t).clamp(0.0, 255.0)
    })
}

/// Samples an sRGB image through a color filter array. Both green sites
/// take the green channel.
pub fn mosaic_from_rgb(img: &PlanarImage, layout: BayerLayout) -> Result<PlanarImage> {
    if img.semantics() != ChannelSemantics::Srgb || img.channels() != 3 {
        return Err(GcpError::UnsupportedChannels("mosaicing needs an sRGB image".into()));
    }
    let (h, w) = (img.height(), img.width());
    if h % 2 != 0 || w % 2 != 0 {
        return Err(GcpError::mismatch("mosaic dimensions must be even"));
    }
    let mut site = [[0usize; 2]; 2];
    for (i, (r, c)) in layout.offsets().into_iter().enumerate() {
        site[r][c] = [0, 1, 1, 2][i];
    }
    PlanarImage::from_fn(h, w, 1, ChannelSemantics::Gray, |_, r, c| {
        img.get(site[r % 2][c % 2], r, c)
    })
}
