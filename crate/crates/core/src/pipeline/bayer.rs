use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{GcpError, Result};
use crate::image::{ChannelSemantics, PlanarImage};

/// Arrangement of the 2x2 color filter cell, named in raster order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BayerLayout {
    #[default]
    Rggb,
    Bggr,
    Grbg,
    Gbrg,
}

impl BayerLayout {
    pub const ALL: [BayerLayout; 4] = [
        BayerLayout::Rggb,
        BayerLayout::Bggr,
        BayerLayout::Grbg,
        BayerLayout::Gbrg,
    ];

    /// Cell offsets `(row, col)` of the R, first G, second G and B sites.
    pub fn offsets(self) -> [(usize, usize); 4] {
        match self {
            BayerLayout::Rggb => [(0, 0), (0, 1), (1, 0), (1, 1)],
            BayerLayout::Bggr => [(1, 1), (0, 1), (1, 0), (0, 0)],
            BayerLayout::Grbg => [(0, 1), (0, 0), (1, 1), (1, 0)],
            BayerLayout::Gbrg => [(1, 0), (0, 0), (1, 1), (0, 1)],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BayerLayout::Rggb => "rggb",
            BayerLayout::Bggr => "bggr",
            BayerLayout::Grbg => "grbg",
            BayerLayout::Gbrg => "gbrg",
        }
    }
}

impl FromStr for BayerLayout {
    type Err = GcpError;

    fn from_str(s: &str) -> Result<Self> {
        BayerLayout::ALL
            .into_iter()
            .find(|l| l.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| GcpError::InvalidConfig(format!("unknown Bayer layout {s:?}")))
    }
}

/// Splits a single-plane mosaic into half-resolution R, G, G, B planes.
pub fn pack_bayer(mosaic: &PlanarImage, layout: BayerLayout) -> Result<PlanarImage> {
    if mosaic.channels() != 1 {
        return Err(GcpError::UnsupportedChannels(format!(
            "a mosaic has one plane, got {}",
            mosaic.channels()
        )));
    }
    let (h, w) = (mosaic.height(), mosaic.width());
    if h % 2 != 0 || w % 2 != 0 || h == 0 || w == 0 {
        return Err(GcpError::mismatch(format!(
            "mosaic dimensions must be even and nonzero, got {h}x{w}"
        )));
    }
    let src = mosaic.plane(0);
    let offs = layout.offsets();
    PlanarImage::from_fn(h / 2, w / 2, 4, ChannelSemantics::PackedRggb, |c, r, col| {
        let (dr, dc) = offs[c];
        src[(2 * r + dr) * w + 2 * col + dc]
    })
}

/// Inverse of [`pack_bayer`].
pub fn unpack_bayer(packed: &PlanarImage, layout: BayerLayout) -> Result<PlanarImage> {
    if packed.channels() != 4 {
        return Err(GcpError::UnsupportedChannels(format!(
            "packed data has four planes, got {}",
            packed.channels()
        )));
    }
    let (h, w) = (packed.height(), packed.width());
    let mut out = vec![0.0; 4 * h * w];
    for (c, &(dr, dc)) in layout.offsets().iter().enumerate() {
        let plane = packed.plane(c);
        for r in 0..h {
            for col in 0..w {
                out[(2 * r + dr) * 2 * w + 2 * col + dc] = plane[r * w + col];
            }
        }
    }
    PlanarImage::new(2 * h, 2 * w, 1, ChannelSemantics::Gray, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray(h: usize, w: usize, data: Vec<f64>) -> PlanarImage {
        PlanarImage::new(h, w, 1, ChannelSemantics::Gray, data).unwrap()
    }

    #[test]
    fn offsets_partition_the_cell() {
        for l in BayerLayout::ALL {
            let mut seen = [false; 4];
            for (r, c) in l.offsets() {
                seen[r * 2 + c] = true;
            }
            assert!(seen.iter().all(|&s| s), "{l:?}");
        }
    }

    #[test]
    fn single_cell() {
        // [[R, G], [G, B]]
        let m = gray(2, 2, vec![10.0, 20.0, 30.0, 40.0]);
        let p = pack_bayer(&m, BayerLayout::Rggb).unwrap();
        assert_eq!(p.data(), &[10.0, 20.0, 30.0, 40.0]);
        let p = pack_bayer(&m, BayerLayout::Bggr).unwrap();
        assert_eq!(p.data(), &[40.0, 20.0, 30.0, 10.0]);
        let p = pack_bayer(&m, BayerLayout::Grbg).unwrap();
        assert_eq!(p.data(), &[20.0, 10.0, 40.0, 30.0]);
    }

    #[test]
    fn constant_mosaic() {
        let p = pack_bayer(&gray(4, 6, vec![7.0; 24]), BayerLayout::Gbrg).unwrap();
        assert_eq!((p.height(), p.width(), p.channels()), (2, 3, 4));
        assert!(p.data().iter().all(|&v| v == 7.0));
    }

    #[test]
    fn rejects_odd_and_multichannel() {
        assert!(pack_bayer(&gray(3, 4, vec![0.0; 12]), BayerLayout::Rggb).is_err());
        let rgb = PlanarImage::filled(4, 4, 3, ChannelSemantics::Srgb, 0.0).unwrap();
        assert!(pack_bayer(&rgb, BayerLayout::Rggb).is_err());
        assert!("xyzw".parse::<BayerLayout>().is_err());
        assert_eq!("GRBG".parse::<BayerLayout>().unwrap(), BayerLayout::Grbg);
    }
}
