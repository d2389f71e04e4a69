//! `GCPW` weight files. See `docs/weight-format.md` for the byte layout.

use std::path::Path;

use super::cnn::{
    architecture_string, parameter_shapes, InputScaling, LayerParams, NoiseClassifier, SigmaGrid, SigmaSpace,
};
use crate::error::{GcpError, Result};

pub const WEIGHT_MAGIC: [u8; 4] = *b"GCPW";
pub const WEIGHT_VERSION: u32 = 1;

fn space_tag(space: SigmaSpace) -> u32 {
    match space {
        SigmaSpace::Raw => 0,
        SigmaSpace::Srgb => 1,
        SigmaSpace::Custom => 2,
    }
}

/// Serializes a classifier.
pub fn encode_weights(net: &NoiseClassifier) -> Vec<u8> {
    let mut out = Vec::new();
    let u32le = |out: &mut Vec<u8>, v: u32| out.extend_from_slice(&v.to_le_bytes());
    out.extend_from_slice(&WEIGHT_MAGIC);
    u32le(&mut out, WEIGHT_VERSION);
    let arch = architecture_string(net.class_count());
    u32le(&mut out, arch.len() as u32);
    out.extend_from_slice(arch.as_bytes());
    u32le(&mut out, net.class_count() as u32);
    u32le(&mut out, space_tag(net.grid().space()));
    for v in net.grid().values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    u32le(&mut out, net.scaling().tag());
    let params = net.params();
    u32le(&mut out, params.len() as u32);
    for p in params {
        u32le(&mut out, p.name.len() as u32);
        out.extend_from_slice(p.name.as_bytes());
        u32le(&mut out, p.dims.len() as u32);
        for d in &p.dims {
            u32le(&mut out, *d as u32);
        }
        for w in p.weight.iter().chain(&p.bias) {
            out.extend_from_slice(&w.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(GcpError::CorruptFile(format!("truncated while reading {what}"))),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>> {
        let bytes = self.take(
            n.checked_mul(4)
                .ok_or_else(|| GcpError::CorruptFile("size overflow".into()))?,
            what,
        )?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let n = self.u32(what)? as usize;
        let bytes = self.take(n, what)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| GcpError::CorruptFile(format!("{what} is not UTF-8")))
    }
}

/// Parses and shape-checks a classifier.
pub fn decode_weights(buf: &[u8]) -> Result<NoiseClassifier> {
    let mut r = Reader { buf, pos: 0 };
    let magic: [u8; 4] = r.take(4, "magic")?.try_into().unwrap();
    if magic != WEIGHT_MAGIC {
        return Err(GcpError::BadMagic {
            expected: WEIGHT_MAGIC,
            found: magic,
        });
    }
    let version = r.u32("version")?;
    if version != WEIGHT_VERSION {
        return Err(GcpError::UnsupportedVersion(version));
    }
    let arch = r.string("architecture")?;
    let classes = r.u32("class count")? as usize;
    if classes == 0 || classes > 4096 {
        return Err(GcpError::CorruptFile(format!("implausible class count {classes}")));
    }
    if arch != architecture_string(classes) {
        return Err(GcpError::mismatch(format!("unsupported architecture {arch:?}")));
    }
    let space = match r.u32("grid space")? {
        0 => SigmaSpace::Raw,
        1 => SigmaSpace::Srgb,
        2 => SigmaSpace::Custom,
        t => return Err(GcpError::CorruptFile(format!("unknown grid space tag {t}"))),
    };
    let values = (0..classes).map(|_| r.f64("sigma grid")).collect::<Result<Vec<_>>>()?;
    let grid = SigmaGrid::new(values, space)?;
    let scaling_tag = r.u32("input scaling")?;
    let scaling = InputScaling::from_tag(scaling_tag)
        .ok_or_else(|| GcpError::CorruptFile(format!("unknown input scaling tag {scaling_tag}")))?;
    let count = r.u32("layer count")? as usize;
    let expected = parameter_shapes(classes);
    if count != expected.len() {
        return Err(GcpError::mismatch(format!(
            "expected {} layers, file has {count}",
            expected.len()
        )));
    }
    let mut params = Vec::with_capacity(count);
    for (name, dims) in expected {
        let got_name = r.string("layer name")?;
        let rank = r.u32("rank")? as usize;
        if rank == 0 || rank > 8 {
            return Err(GcpError::CorruptFile(format!(
                "implausible rank {rank} for layer {got_name}"
            )));
        }
        let got_dims = (0..rank)
            .map(|_| r.u32("dims").map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        if got_name != name || got_dims != dims {
            return Err(GcpError::mismatch(format!(
                "layer {got_name:?} {got_dims:?}, expected {name:?} {dims:?}"
            )));
        }
        let weight = r.f32s(dims.iter().product(), "weights")?;
        let bias = r.f32s(dims[0], "bias")?;
        params.push(LayerParams {
            name: got_name,
            dims: got_dims,
            weight,
            bias,
        });
    }
    if r.pos != buf.len() {
        return Err(GcpError::CorruptFile(format!("{} trailing bytes", buf.len() - r.pos)));
    }
    NoiseClassifier::from_params(grid, scaling, params)
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<NoiseClassifier> {
    let path = path.as_ref();
    let buf = std::fs::read(path).map_err(|e| GcpError::io(path, e))?;
    decode_weights(&buf)
}

pub fn save_weights(net: &NoiseClassifier, path: impl AsRef<Path>) -> Result<()> {
    crate::io::write_atomic(path, &encode_weights(net))
}
