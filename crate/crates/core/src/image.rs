//! Planar floating-point images.
//!
//! Pixels live on the 8-bit scale `[0, 255]` as `f64`, stored channel-major:
//! all of channel 0 row by row, then channel 1, and so on.

use crate::error::{GcpError, Result};

/// What the channels of a [`PlanarImage`] mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelSemantics {
    /// Single plane, e.g. a Bayer mosaic or a grayscale image.
    Gray,
    /// Three channels in R, G, B order.
    Srgb,
    /// Four channels in R, G, G, B order (a packed Bayer mosaic).
    PackedRggb,
    /// Any number of spectral bands.
    Hsi,
}

impl ChannelSemantics {
    /// Whether `channels` is a legal channel count for these semantics.
    pub fn accepts(self, channels: usize) -> bool {
        match self {
            ChannelSemantics::Gray => channels == 1,
            ChannelSemantics::Srgb => channels == 3,
            ChannelSemantics::PackedRggb => channels == 4,
            ChannelSemantics::Hsi => channels >= 1,
        }
    }

    pub(crate) fn tag(self) -> u32 {
        match self {
            ChannelSemantics::Gray => 0,
            ChannelSemantics::Srgb => 1,
            ChannelSemantics::PackedRggb => 2,
            ChannelSemantics::Hsi => 3,
        }
    }

    pub(crate) fn from_tag(tag: u32) -> Option<Self> {
        Some(match tag {
            0 => ChannelSemantics::Gray,
            1 => ChannelSemantics::Srgb,
            2 => ChannelSemantics::PackedRggb,
            3 => ChannelSemantics::Hsi,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanarImage {
    height: usize,
    width: usize,
    channels: usize,
    semantics: ChannelSemantics,
    data: Vec<f64>,
}

impl PlanarImage {
    /// Wraps planar data, validating its length, channel count and finiteness.
    pub fn new(
        height: usize,
        width: usize,
        channels: usize,
        semantics: ChannelSemantics,
        data: Vec<f64>,
    ) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(GcpError::EmptyImage);
        }
        if !semantics.accepts(channels) {
            return Err(GcpError::UnsupportedChannels(format!(
                "{channels} channels with {semantics:?} semantics"
            )));
        }
        if data.len() != height * width * channels {
            return Err(GcpError::mismatch(format!(
                "expected {} samples for {height}x{width}x{channels}, got {}",
                height * width * channels,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(GcpError::Numeric("non-finite pixel value".into()));
        }
        Ok(Self {
            height,
            width,
            channels,
            semantics,
            data,
        })
    }

    pub fn filled(
        height: usize,
        width: usize,
        channels: usize,
        semantics: ChannelSemantics,
        value: f64,
    ) -> Result<Self> {
        Self::new(
            height,
            width,
            channels,
            semantics,
            vec![value; height * width * channels],
        )
    }

    /// Builds an image by evaluating `f(channel, row, col)` at every sample.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        semantics: ChannelSemantics,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * channels);
        for c in 0..channels {
            for r in 0..height {
                for col in 0..width {
                    data.push(f(c, r, col));
                }
            }
        }
        Self::new(height, width, channels, semantics, data)
    }

    /// Stacks single planes into one image.
    pub fn from_planes(planes: &[&[f64]], height: usize, width: usize, semantics: ChannelSemantics) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * planes.len());
        for p in planes {
            if p.len() != height * width {
                return Err(GcpError::mismatch("plane size does not match image size"));
            }
            data.extend_from_slice(p);
        }
        Self::new(height, width, planes.len(), semantics, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn semantics(&self) -> ChannelSemantics {
        self.semantics
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn plane(&self, channel: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[channel * n..(channel + 1) * n]
    }

    pub fn plane_mut(&mut self, channel: usize) -> &mut [f64] {
        let n = self.height * self.width;
        &mut self.data[channel * n..(channel + 1) * n]
    }

    #[inline]
    pub fn get(&self, channel: usize, row: usize, col: usize) -> f64 {
        self.data[(channel * self.height + row) * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, channel: usize, row: usize, col: usize, value: f64) {
        self.data[(channel * self.height + row) * self.width + col] = value;
    }

    pub fn same_shape(&self, other: &PlanarImage) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    /// Returns a copy carrying different semantics (channel count must still fit).
    pub fn with_semantics(mut self, semantics: ChannelSemantics) -> Result<Self> {
        if !semantics.accepts(self.channels) {
            return Err(GcpError::UnsupportedChannels(format!(
                "{} channels with {semantics:?} semantics",
                self.channels
            )));
        }
        self.semantics = semantics;
        Ok(self)
    }

    /// Copies channels `[start, start + count)` into a new image.
    pub fn select_channels(&self, start: usize, count: usize, semantics: ChannelSemantics) -> Result<Self> {
        if start + count > self.channels {
            return Err(GcpError::mismatch(format!(
                "channels {start}..{} out of range for {} channels",
                start + count,
                self.channels
            )));
        }
        let n = self.height * self.width;
        let data = self.data[start * n..(start + count) * n].to_vec();
        Self::new(self.height, self.width, count, semantics, data)
    }

    /// Clamps every sample to `[0, 255]`.
    pub fn clamped(&self) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v = v.clamp(0.0, 255.0));
        out
    }

    /// Largest absolute per-sample difference.
    pub fn max_abs_diff(&self, other: &PlanarImage) -> Result<f64> {
        if !self.same_shape(other) {
            return Err(GcpError::mismatch("images differ in shape"));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// The plane used to guide noise estimation and green-channel search.
    ///
    /// sRGB takes G; packed RGGB averages the two green sites; gray takes
    /// its only plane; hyperspectral data takes the center band.
    pub fn green_plane(&self) -> Vec<f64> {
        match self.semantics {
            ChannelSemantics::Srgb => self.plane(1).to_vec(),
            ChannelSemantics::PackedRggb => self
                .plane(1)
                .iter()
                .zip(self.plane(2))
                .map(|(a, b)| 0.5 * (a + b))
                .collect(),
            ChannelSemantics::Gray => self.plane(0).to_vec(),
            ChannelSemantics::Hsi => self.plane(self.channels / 2).to_vec(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_wrong_length_and_nan() {
        assert!(PlanarImage::new(2, 2, 3, ChannelSemantics::Srgb, vec![0.0; 11]).is_err());
        let mut d = vec![0.0; 12];
        d[3] = f64::NAN;
        assert!(matches!(
            PlanarImage::new(2, 2, 3, ChannelSemantics::Srgb, d),
            Err(GcpError::Numeric(_))
        ));
        assert!(matches!(
            PlanarImage::new(2, 2, 4, ChannelSemantics::Srgb, vec![0.0; 16]),
            Err(GcpError::UnsupportedChannels(_))
        ));
    }

    #[test]
    fn planar_indexing() {
        let img = PlanarImage::from_fn(2, 3, 3, ChannelSemantics::Srgb, |c, r, col| {
            (c * 100 + r * 10 + col) as f64
        })
        .unwrap();
        assert_eq!(img.get(2, 1, 2), 212.0);
        assert_eq!(img.plane(1), &[100.0, 101.0, 102.0, 110.0, 111.0, 112.0]);
        assert_eq!(img.green_plane(), img.plane(1));
    }

    #[test]
    fn packed_green_is_mean_of_sites() {
        let img =
            PlanarImage::from_fn(1, 1, 4, ChannelSemantics::PackedRggb, |c, _, _| [1.0, 2.0, 4.0, 8.0][c]).unwrap();
        assert_eq!(img.green_plane(), vec![3.0]);
    }
}
