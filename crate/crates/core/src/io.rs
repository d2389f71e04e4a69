//! Image files and the `GCPT` planar container.
//!
//! PNG and PNM files carry gray or RGB data at 8 or 16 bits. Everything
//! else (packed raw, frame stacks, spectral cubes) goes through the
//! container, whose byte layout is described in `docs/container-format.md`.
//! Writers go through a temporary file in the destination directory, so a
//! failed write never leaves a partial file behind.

use std::io::Write;
use std::path::Path;

use image::{DynamicImage, ImageBuffer, ImageFormat, Luma, Rgb};

use crate::error::{GcpError, Result};
use crate::image::{ChannelSemantics, PlanarImage};

pub const CONTAINER_MAGIC: [u8; 4] = *b"GCPT";
pub const CONTAINER_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 6 * 4;

/// Writes `bytes` to `path` atomically.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| GcpError::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| GcpError::io(path, e))?;
    tmp.persist(path).map_err(|e| GcpError::io(path, e.error))?;
    Ok(())
}

/// Decoded integer samples and their bit depth.
struct Decoded {
    height: usize,
    width: usize,
    channels: usize,
    depth: u32,
    /// Interleaved samples.
    samples: Vec<u16>,
}

fn decode(path: &Path) -> Result<Decoded> {
    let bytes = std::fs::read(path).map_err(|e| GcpError::io(path, e))?;
    let img = image::load_from_memory(&bytes).map_err(|e| GcpError::Codec {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let (width, height) = (img.width() as usize, img.height() as usize);
    let (channels, depth, samples) = match img {
        DynamicImage::ImageLuma8(b) => (1, 8, b.into_raw().into_iter().map(u16::from).collect()),
        DynamicImage::ImageRgb8(b) => (3, 8, b.into_raw().into_iter().map(u16::from).collect()),
        DynamicImage::ImageLuma16(b) => (1, 16, b.into_raw()),
        DynamicImage::ImageRgb16(b) => (3, 16, b.into_raw()),
        other => {
            return Err(GcpError::UnsupportedPixelFormat(format!(
                "{}: {:?}",
                path.display(),
                other.color()
            )))
        }
    };
    Ok(Decoded {
        height,
        width,
        channels,
        depth,
        samples,
    })
}

fn planar(d: &Decoded, map: impl Fn(u16) -> f64) -> Result<PlanarImage> {
    let n = d.height * d.width;
    let mut data = vec![0.0; n * d.channels];
    for (i, &s) in d.samples.iter().enumerate() {
        data[(i % d.channels) * n + i / d.channels] = map(s);
    }
    let sem = if d.channels == 3 {
        ChannelSemantics::Srgb
    } else {
        ChannelSemantics::Gray
    };
    PlanarImage::new(d.height, d.width, d.channels, sem, data)
}

/// Loads a gray or RGB image, rescaling 16-bit samples to `[0, 255]`.
pub fn load_image(path: impl AsRef<Path>) -> Result<PlanarImage> {
    let d = decode(path.as_ref())?;
    let scale = 255.0 / ((1u32 << d.depth) - 1) as f64;
    planar(&d, |s| s as f64 * scale)
}

/// Black and white levels of raw sensor data, in stored sample units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawLevels {
    pub black: f64,
    /// `None` uses the largest value the bit depth can hold.
    pub white: Option<f64>,
}

impl Default for RawLevels {
    fn default() -> Self {
        Self {
            black: 0.0,
            white: None,
        }
    }
}

/// Loads a single-plane mosaic and maps it to `255 * (v - black) / (white - black)`.
pub fn load_raw_mosaic(path: impl AsRef<Path>, levels: RawLevels) -> Result<PlanarImage> {
    let path = path.as_ref();
    let d = decode(path)?;
    if d.channels != 1 {
        return Err(GcpError::UnsupportedChannels(format!(
            "{}: a mosaic needs one plane, found {}",
            path.display(),
            d.channels
        )));
    }
    let white = levels.white.unwrap_or(((1u32 << d.depth) - 1) as f64);
    if !white.is_finite() || !levels.black.is_finite() || white <= levels.black {
        return Err(GcpError::InvalidConfig(format!(
            "white level {white} must exceed black level {}",
            levels.black
        )));
    }
    let scale = 255.0 / (white - levels.black);
    planar(&d, |s| (s as f64 - levels.black) * scale).and_then(|img| img.with_semantics(ChannelSemantics::Gray))
}

fn format_for(path: &Path) -> Result<ImageFormat> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    match ext.as_str() {
        "png" => Ok(ImageFormat::Png),
        "pgm" | "ppm" | "pnm" => Ok(ImageFormat::Pnm),
        _ => Err(GcpError::UnsupportedPixelFormat(format!(
            "{}: expected a .png, .pgm or .ppm file name",
            path.display()
        ))),
    }
}

/// Saves a gray or sRGB image at 8 or 16 bits, clamping to `[0, 255]` and
/// rounding.
pub fn save_image(img: &PlanarImage, path: impl AsRef<Path>, depth: u32) -> Result<()> {
    let path = path.as_ref();
    let format = format_for(path)?;
    let (h, w, c) = (img.height(), img.width(), img.channels());
    if c != 1 && c != 3 {
        return Err(GcpError::UnsupportedChannels(format!(
            "image files hold one or three channels, got {c}; use the container"
        )));
    }
    let n = h * w;
    let max = match depth {
        8 => 255.0,
        16 => 65535.0,
        _ => return Err(GcpError::UnsupportedPixelFormat(format!("bit depth {depth}"))),
    };
    let samples: Vec<u16> = (0..n * c)
        .map(|i| (img.data()[(i % c) * n + i / c].clamp(0.0, 255.0) / 255.0 * max).round() as u16)
        .collect();
    let (wu, hu) = (w as u32, h as u32);
    let bad = || GcpError::mismatch("sample buffer does not match image size");
    let dynamic = match (c, depth) {
        (1, 8) => DynamicImage::ImageLuma8(
            ImageBuffer::<Luma<u8>, _>::from_raw(wu, hu, samples.iter().map(|&s| s as u8).collect()).ok_or_else(bad)?,
        ),
        (3, 8) => DynamicImage::ImageRgb8(
            ImageBuffer::<Rgb<u8>, _>::from_raw(wu, hu, samples.iter().map(|&s| s as u8).collect()).ok_or_else(bad)?,
        ),
        (1, _) => DynamicImage::ImageLuma16(ImageBuffer::<Luma<u16>, _>::from_raw(wu, hu, samples).ok_or_else(bad)?),
        _ => DynamicImage::ImageRgb16(ImageBuffer::<Rgb<u16>, _>::from_raw(wu, hu, samples).ok_or_else(bad)?),
    };
    let mut buf = std::io::Cursor::new(Vec::new());
    dynamic.write_to(&mut buf, format).map_err(|e| GcpError::Codec {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    write_atomic(path, &buf.into_inner())
}

/// Serializes frames sharing one shape and semantics.
pub fn encode_container(frames: &[PlanarImage]) -> Result<Vec<u8>> {
    let first = frames.first().ok_or(GcpError::EmptyImage)?;
    if frames
        .iter()
        .any(|f| !f.same_shape(first) || f.semantics() != first.semantics())
    {
        return Err(GcpError::mismatch("container frames must share shape and semantics"));
    }
    let dims = [frames.len(), first.height(), first.width(), first.channels()];
    if dims.iter().any(|&d| d > u32::MAX as usize) {
        return Err(GcpError::mismatch("dimension too large for the container"));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * frames.len() * first.data().len());
    out.extend_from_slice(&CONTAINER_MAGIC);
    out.extend_from_slice(&CONTAINER_VERSION.to_le_bytes());
    out.extend_from_slice(&first.semantics().tag().to_le_bytes());
    for d in dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for f in frames {
        for &v in f.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_container(buf: &[u8]) -> Result<Vec<PlanarImage>> {
    if buf.len() < HEADER_LEN {
        return Err(GcpError::CorruptFile(format!(
            "{} bytes is shorter than the header",
            buf.len()
        )));
    }
    let magic: [u8; 4] = buf[..4].try_into().unwrap();
    if magic != CONTAINER_MAGIC {
        return Err(GcpError::BadMagic {
            expected: CONTAINER_MAGIC,
            found: magic,
        });
    }
    let word = |i: usize| u32::from_le_bytes(buf[4 + 4 * i..8 + 4 * i].try_into().unwrap());
    let version = word(0);
    if version != CONTAINER_VERSION {
        return Err(GcpError::UnsupportedVersion(version));
    }
    let sem = ChannelSemantics::from_tag(word(1))
        .ok_or_else(|| GcpError::CorruptFile(format!("unknown semantics tag {}", word(1))))?;
    let (frames, h, w, c) = (word(2) as usize, word(3) as usize, word(4) as usize, word(5) as usize);
    if frames == 0 || h == 0 || w == 0 {
        return Err(GcpError::CorruptFile("zero-sized container".into()));
    }
    if !sem.accepts(c) {
        return Err(GcpError::CorruptFile(format!("{c} channels with {sem:?} semantics")));
    }
    let per_frame = h
        .checked_mul(w)
        .and_then(|v| v.checked_mul(c))
        .ok_or_else(|| GcpError::CorruptFile("dimensions overflow".into()))?;
    let expected = per_frame
        .checked_mul(frames)
        .and_then(|v| v.checked_mul(4))
        .and_then(|v| v.checked_add(HEADER_LEN))
        .ok_or_else(|| GcpError::CorruptFile("dimensions overflow".into()))?;
    if buf.len() != expected {
        return Err(GcpError::CorruptFile(format!(
            "expected {expected} bytes for {frames}x{h}x{w}x{c}, found {}",
            buf.len()
        )));
    }
    buf[HEADER_LEN..]
        .chunks_exact(4 * per_frame)
        .map(|chunk| {
            let data = chunk
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
                .collect();
            PlanarImage::new(h, w, c, sem, data)
        })
        .collect()
}

pub fn save_container(frames: &[PlanarImage], path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path, &encode_container(frames)?)
}

pub fn load_container(path: impl AsRef<Path>) -> Result<Vec<PlanarImage>> {
    let path = path.as_ref();
    decode_container(&std::fs::read(path).map_err(|e| GcpError::io(path, e))?)
}

/// A single hyperspectral cube.
pub fn save_cube(cube: &PlanarImage, path: impl AsRef<Path>) -> Result<()> {
    save_container(std::slice::from_ref(cube), path)
}

pub fn load_cube(path: impl AsRef<Path>) -> Result<PlanarImage> {
    let mut frames = load_container(path)?;
    if frames.len() != 1 {
        return Err(GcpError::mismatch(format!(
            "expected one cube, found {} frames",
            frames.len()
        )));
    }
    Ok(frames.remove(0))
}
