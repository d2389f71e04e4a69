//! Denoising pipelines for sRGB images, packed Bayer raw data, video and
//! hyperspectral cubes, all driven by one reference-patch engine.

mod bayer;
mod variants;

pub use bayer::{pack_bayer, unpack_bayer, BayerLayout};
pub use variants::{
    denoise_hsi, denoise_hsi_traced, denoise_plane, denoise_plane_on_grid, denoise_raw, denoise_srgb, denoise_video,
    hsi_band_group, hsi_medium_group, HsiConfig, HsiTrace, VideoConfig, HSI_GROUP,
};

use serde::Serialize;

use crate::config::{DenoiseConfig, SigmaSource};
use crate::error::{GcpError, Result};
use crate::estimator::{estimate_sigma_map, SigmaMap};
use crate::filter::{filter_group, filter_group_with, AggregationBuffer};
use crate::image::PlanarImage;
use crate::search::{extract_rggb, search_matches, GuidePlanes, PatchGroup, PatchOrigin, SearchParams, SearchScheme};

/// References handled per parallel batch; results are aggregated in
/// reference order after each batch.
const BATCH: usize = 256;

/// Placement of reference patches: every `stride` pixels from the top-left,
/// plus one flush against the far border when the stride misses it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ReferenceGrid {
    pub row_stride: usize,
    pub col_stride: usize,
}

impl ReferenceGrid {
    pub fn uniform(stride: usize) -> Self {
        Self {
            row_stride: stride,
            col_stride: stride,
        }
    }

    pub fn positions(extent: usize, ps: usize, stride: usize) -> Vec<usize> {
        if extent < ps || stride == 0 {
            return Vec::new();
        }
        let last = extent - ps;
        let mut v: Vec<usize> = (0..=last).step_by(stride).collect();
        if *v.last().unwrap() != last {
            v.push(last);
        }
        v
    }

    /// Reference origins for one frame, row-major.
    pub fn origins(&self, height: usize, width: usize, ps: usize, frame: usize) -> Vec<PatchOrigin> {
        let cols = Self::positions(width, ps, self.col_stride);
        Self::positions(height, ps, self.row_stride)
            .into_iter()
            .flat_map(|r| cols.iter().map(move |&c| PatchOrigin::in_frame(frame, r, c)))
            .collect()
    }
}

/// Noise level for each reference patch.
#[derive(Debug, Clone)]
pub(crate) enum SigmaField<'a> {
    Constant(f64),
    Maps(std::borrow::Cow<'a, [SigmaMap]>),
}

impl SigmaField<'_> {
    fn at(&self, origin: PatchOrigin) -> f64 {
        match self {
            SigmaField::Constant(s) => *s,
            SigmaField::Maps(m) => m[origin.frame.min(m.len() - 1)].sigma_at(origin.row, origin.col),
        }
    }

    /// Resolves the configured source against the guide frames.
    pub(crate) fn resolve<'a>(cfg: &'a DenoiseConfig, guide: &[PlanarImage]) -> Result<SigmaField<'a>> {
        match &cfg.sigma {
            SigmaSource::Fixed(s) => Ok(SigmaField::Constant(*s)),
            SigmaSource::Estimated(net) => {
                let maps = guide
                    .iter()
                    .map(|f| estimate_sigma_map(f, net, cfg.execution))
                    .collect::<Result<Vec<_>>>()?;
                Ok(SigmaField::Maps(maps.into()))
            }
            SigmaSource::Maps(maps) => {
                if maps.is_empty() || (maps.len() != 1 && maps.len() != guide.len()) {
                    return Err(GcpError::mismatch(format!(
                        "{} sigma maps for {} frames",
                        maps.len(),
                        guide.len()
                    )));
                }
                for (m, f) in maps.iter().zip(guide) {
                    if m.grid.height != f.height() || m.grid.width != f.width() {
                        return Err(GcpError::mismatch(format!(
                            "sigma map for {}x{} applied to a {}x{} frame",
                            m.grid.height,
                            m.grid.width,
                            f.height(),
                            f.width()
                        )));
                    }
                }
                Ok(SigmaField::Maps(std::borrow::Cow::Borrowed(maps.as_slice())))
            }
        }
    }
}

/// One engine run. `layers[l][f]` is frame `f` of layer `l`; every layer
/// shares one shape. Block matching runs on layer `guide` only, and its
/// matches and learned transforms are reused by the other layers.
pub(crate) struct Engine<'a> {
    pub layers: &'a [Vec<PlanarImage>],
    pub guide: usize,
    pub cfg: &'a DenoiseConfig,
    pub grid: ReferenceGrid,
    pub scheme: SearchScheme,
    pub temporal_radius: usize,
    /// Frame count entering the threshold level.
    pub tau_frames: usize,
    pub sigma: SigmaField<'a>,
    /// Record member origins per layer for every reference.
    pub trace: bool,
}

pub(crate) struct EngineOutput {
    pub layers: Vec<Vec<PlanarImage>>,
    /// `origins[l][i]`: members of reference `i` as used by layer `l`.
    pub origins: Option<Vec<Vec<Vec<PatchOrigin>>>>,
}

impl Engine<'_> {
    fn check(&self) -> Result<(usize, usize)> {
        self.cfg.validate()?;
        let first = self
            .layers
            .first()
            .and_then(|l| l.first())
            .ok_or(GcpError::EmptyImage)?;
        if self.guide >= self.layers.len() {
            return Err(GcpError::mismatch("guide layer out of range"));
        }
        let frames = self.layers[0].len();
        for layer in self.layers {
            if layer.len() != frames || layer.iter().any(|f| !f.same_shape(first)) {
                return Err(GcpError::mismatch("all frames must share one shape"));
            }
        }
        let ps = self.cfg.patch_size;
        if first.height() < ps || first.width() < ps {
            return Err(GcpError::InvalidConfig(format!(
                "a {}x{} image cannot hold {ps}x{ps} patches",
                first.height(),
                first.width()
            )));
        }
        Ok((first.height(), first.width()))
    }

    fn process(
        &self,
        guides: &[GuidePlanes],
        reference: PatchOrigin,
        params: &SearchParams,
    ) -> Result<Vec<PatchGroup>> {
        let ps = self.cfg.patch_size;
        let (matches, branch) = search_matches(guides, reference, params);
        let tau = self.cfg.tau(self.sigma.at(reference), self.tau_frames);
        let group_of = |layer: &[PlanarImage]| -> Result<PatchGroup> {
            Ok(PatchGroup {
                patches: matches
                    .iter()
                    .map(|m| extract_rggb(&layer[m.origin.frame], m.origin, ps))
                    .collect::<Result<Vec<_>>>()?,
                distances: matches.iter().map(|m| m.distance).collect(),
                branch,
            })
        };
        let (guided, t) = filter_group(&group_of(&self.layers[self.guide])?, tau)?;
        let mut guided = Some(guided.group);
        let mut out = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            if l == self.guide {
                out.push(guided.take().unwrap());
            } else {
                out.push(filter_group_with(&group_of(layer)?, &t, tau)?.group);
            }
        }
        Ok(out)
    }

    pub fn run(&self) -> Result<EngineOutput> {
        let (height, width) = self.check()?;
        let frames = self.layers[0].len();
        let guides: Vec<GuidePlanes> = self.layers[self.guide].iter().map(GuidePlanes::new).collect();
        let params = SearchParams {
            temporal_radius: self.temporal_radius,
            ..SearchParams::from_config(self.cfg, self.scheme)
        };
        let refs: Vec<PatchOrigin> = (0..frames)
            .flat_map(|f| self.grid.origins(height, width, self.cfg.patch_size, f))
            .collect();

        let mut buffers: Vec<Vec<AggregationBuffer>> = self
            .layers
            .iter()
            .map(|layer| layer.iter().map(AggregationBuffer::new).collect())
            .collect();
        let mut origins = self
            .trace
            .then(|| vec![Vec::with_capacity(refs.len()); self.layers.len()]);

        let exec = self.cfg.execution;
        exec.install(|| -> Result<()> {
            for batch in refs.chunks(BATCH) {
                let results = exec.map(batch, |&r| self.process(&guides, r, &params));
                for groups in results {
                    for (l, group) in groups?.into_iter().enumerate() {
                        if let Some(o) = origins.as_mut() {
                            o[l].push(group.origins());
                        }
                        for p in &group.patches {
                            buffers[l][p.origin.frame].add_patch(p)?;
                        }
                    }
                }
            }
            Ok(())
        })?;

        let layers = buffers
            .into_iter()
            .zip(self.layers)
            .map(|(bufs, src)| {
                bufs.into_iter()
                    .zip(src)
                    .map(|(b, f)| b.finish(f))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(EngineOutput { layers, origins })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_positions_cover_the_border() {
        assert_eq!(ReferenceGrid::positions(20, 8, 4), vec![0, 4, 8, 12]);
        assert_eq!(ReferenceGrid::positions(21, 8, 4), vec![0, 4, 8, 12, 13]);
        assert_eq!(ReferenceGrid::positions(8, 8, 4), vec![0]);
        assert!(ReferenceGrid::positions(7, 8, 4).is_empty());
        let g = ReferenceGrid {
            row_stride: 2,
            col_stride: 4,
        };
        let o = g.origins(12, 12, 8, 1);
        assert_eq!(o.len(), 3 * 2);
        assert_eq!(o[1], PatchOrigin::in_frame(1, 0, 4));
    }
}
