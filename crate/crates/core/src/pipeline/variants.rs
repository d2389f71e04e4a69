use serde::Serialize;

use super::bayer::{pack_bayer, unpack_bayer, BayerLayout};
use super::{Engine, ReferenceGrid, SigmaField};
use crate::config::DenoiseConfig;
use crate::error::{GcpError, Result};
use crate::image::{ChannelSemantics, PlanarImage};
use crate::search::{scheme_for, PatchOrigin, SearchScheme};

/// Bands per spectral group in hyperspectral denoising.
pub const HSI_GROUP: usize = 4;

fn check_plane(img: &PlanarImage) -> Result<()> {
    let ok = match img.semantics() {
        ChannelSemantics::Srgb => img.channels() == 3,
        _ => img.channels() == 4,
    };
    if ok {
        Ok(())
    } else {
        Err(GcpError::UnsupportedChannels(format!(
            "expected an sRGB image or four-channel data, got {} {:?} channels",
            img.channels(),
            img.semantics()
        )))
    }
}

fn run_frames(
    frames: &[PlanarImage],
    cfg: &DenoiseConfig,
    grid: ReferenceGrid,
    temporal_radius: usize,
    tau_frames: usize,
) -> Result<Vec<PlanarImage>> {
    let first = frames.first().ok_or(GcpError::EmptyImage)?;
    for f in frames {
        check_plane(f)?;
    }
    let layers = [frames.to_vec()];
    let engine = Engine {
        layers: &layers,
        guide: 0,
        cfg,
        grid,
        scheme: scheme_for(first, cfg.lambda),
        temporal_radius,
        tau_frames,
        sigma: SigmaField::resolve(cfg, frames)?,
        trace: false,
    };
    Ok(engine.run()?.layers.pop().unwrap())
}

/// Denoises an sRGB image or any four-channel image (packed RGGB, one
/// spectral band group).
pub fn denoise_plane(img: &PlanarImage, cfg: &DenoiseConfig) -> Result<PlanarImage> {
    denoise_plane_on_grid(img, cfg, ReferenceGrid::uniform(cfg.stride))
}

/// [`denoise_plane`] with explicit reference spacing per axis.
pub fn denoise_plane_on_grid(img: &PlanarImage, cfg: &DenoiseConfig, grid: ReferenceGrid) -> Result<PlanarImage> {
    if grid.row_stride == 0 || grid.col_stride == 0 {
        return Err(GcpError::InvalidConfig("stride must be at least 1".into()));
    }
    Ok(run_frames(std::slice::from_ref(img), cfg, grid, 0, 1)?.remove(0))
}

pub fn denoise_srgb(img: &PlanarImage, cfg: &DenoiseConfig) -> Result<PlanarImage> {
    if img.semantics() != ChannelSemantics::Srgb || img.channels() != 3 {
        return Err(GcpError::UnsupportedChannels(format!(
            "sRGB denoising needs three sRGB channels, got {} {:?}",
            img.channels(),
            img.semantics()
        )));
    }
    denoise_plane(img, cfg)
}

/// Packs the mosaic, denoises the four half-resolution planes together and
/// unpacks the result.
pub fn denoise_raw(mosaic: &PlanarImage, layout: BayerLayout, cfg: &DenoiseConfig) -> Result<PlanarImage> {
    let packed = pack_bayer(mosaic, layout)?;
    unpack_bayer(&denoise_plane(&packed, cfg)?, layout)
}

#[derive(Debug, Clone)]
pub struct VideoConfig {
    pub base: DenoiseConfig,
    /// Temporal window; odd.
    pub frames: usize,
}

impl Default for VideoConfig {
    fn default() -> Self {
        Self {
            base: DenoiseConfig::default(),
            frames: 3,
        }
    }
}

impl VideoConfig {
    pub fn new(base: DenoiseConfig, frames: usize) -> Self {
        Self { base, frames }
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 || self.frames.is_multiple_of(2) {
            return Err(GcpError::InvalidConfig(format!(
                "temporal window must be odd and positive, got {}",
                self.frames
            )));
        }
        self.base.validate()
    }
}

/// Groups draw on the spatial windows of up to `frames` neighbouring frames;
/// each denoised patch returns to its own frame.
pub fn denoise_video(frames: &[PlanarImage], vcfg: &VideoConfig) -> Result<Vec<PlanarImage>> {
    vcfg.validate()?;
    run_frames(
        frames,
        &vcfg.base,
        ReferenceGrid::uniform(vcfg.base.stride),
        vcfg.frames / 2,
        vcfg.frames,
    )
}

#[derive(Debug, Clone, Default)]
pub struct HsiConfig {
    pub base: DenoiseConfig,
}

/// Member origins every band group used, per reference.
#[derive(Debug, Clone, Serialize)]
pub struct HsiTrace {
    /// Index of the band group that was searched.
    pub medium: usize,
    /// `origins[g][i]`: members of reference `i` in band group `g`.
    pub origins: Vec<Vec<Vec<PatchOrigin>>>,
}

/// Index of the band group holding band `bands / 2`.
pub fn hsi_medium_group(bands: usize) -> usize {
    (bands / 2) / HSI_GROUP
}

/// Bands `4g..4g+3` of a cube as a four-channel image. A short last group
/// repeats the final band.
pub fn hsi_band_group(cube: &PlanarImage, g: usize) -> Result<PlanarImage> {
    let bands = cube.channels();
    if bands == 0 || g * HSI_GROUP >= bands {
        return Err(GcpError::mismatch(format!("no band group {g} in a {bands}-band cube")));
    }
    let planes: Vec<&[f64]> = (0..HSI_GROUP)
        .map(|j| cube.plane((g * HSI_GROUP + j).min(bands - 1)))
        .collect();
    PlanarImage::from_planes(&planes, cube.height(), cube.width(), ChannelSemantics::Hsi)
}

pub fn denoise_hsi(cube: &PlanarImage, hcfg: &HsiConfig) -> Result<PlanarImage> {
    hsi(cube, hcfg, false).map(|(c, _)| c)
}

/// [`denoise_hsi`] that also reports the member origins of every group.
pub fn denoise_hsi_traced(cube: &PlanarImage, hcfg: &HsiConfig) -> Result<(PlanarImage, HsiTrace)> {
    let (c, t) = hsi(cube, hcfg, true)?;
    Ok((c, t.unwrap()))
}

fn hsi(cube: &PlanarImage, hcfg: &HsiConfig, trace: bool) -> Result<(PlanarImage, Option<HsiTrace>)> {
    let bands = cube.channels();
    let (h, w) = (cube.height(), cube.width());
    let layers: Vec<Vec<PlanarImage>> = (0..bands.div_ceil(HSI_GROUP))
        .map(|g| hsi_band_group(cube, g).map(|img| vec![img]))
        .collect::<Result<_>>()?;
    let medium = hsi_medium_group(bands);
    let cfg = &hcfg.base;
    let engine = Engine {
        layers: &layers,
        guide: medium,
        cfg,
        grid: ReferenceGrid::uniform(cfg.stride),
        scheme: SearchScheme::Full,
        temporal_radius: 0,
        tau_frames: 1,
        sigma: SigmaField::resolve(cfg, &layers[medium])?,
        trace,
    };
    let out = engine.run()?;
    let planes: Vec<&[f64]> = (0..bands)
        .map(|b| out.layers[b / HSI_GROUP][0].plane(b % HSI_GROUP))
        .collect();
    let denoised = PlanarImage::from_planes(&planes, h, w, ChannelSemantics::Hsi)?;
    Ok((denoised, out.origins.map(|origins| HsiTrace { medium, origins })))
}
