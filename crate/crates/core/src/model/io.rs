//! Binary weight files.
//!
//! Layout (little-endian): magic `NWTS1\n`, feature-set code `u8`,
//! `k_neighbors u32`, `coord_scale_mm f64`, layer counts `u32 x 3`
//! (edge, point, head including the output layer), then `fan_in u32, fan_out u32`
//! per layer, then every array as `f32` in serialization order.

use std::path::Path;

use super::features::FeatureSet;
use super::network::{ArchConfig, ModelWeights};
use crate::error::{Error, Result};
use crate::nvol::write_atomic;

const MAGIC: &[u8] = b"NWTS1\n";

pub fn encode_weights(w: &ModelWeights) -> Vec<u8> {
    let mut out = MAGIC.to_vec();
    out.push(w.feature_set.code());
    out.extend((w.arch.k_neighbors as u32).to_le_bytes());
    out.extend(w.arch.coord_scale_mm.to_le_bytes());
    for n in [w.edge.len(), w.point.len(), w.head.len()] {
        out.extend((n as u32).to_le_bytes());
    }
    for l in w.edge.iter().chain(&w.point).chain(&w.head) {
        out.extend((l.fan_in() as u32).to_le_bytes());
        out.extend((l.fan_out() as u32).to_le_bytes());
    }
    for (_, data) in w.arrays() {
        for &v in data {
            out.extend((v as f32).to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn err(&self, reason: impl Into<String>) -> Error {
        Error::Malformed {
            kind: "weights",
            path: self.path.to_path_buf(),
            reason: reason.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.err("truncated"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
}

pub fn decode_weights(bytes: &[u8], path: &Path) -> Result<ModelWeights> {
    let mut c = Cursor { bytes, pos: 0, path };
    if c.take(MAGIC.len()).ok() != Some(MAGIC) {
        return Err(c.err("bad magic"));
    }
    let code = c.take(1)?[0];
    let feature_set =
        FeatureSet::from_code(code).ok_or_else(|| c.err(format!("unknown feature code {code}")))?;
    let k_neighbors = c.u32()?;
    let coord_scale_mm = f64::from_le_bytes(c.take(8)?.try_into().unwrap());
    let (ne, np, nh) = (c.u32()?, c.u32()?, c.u32()?);
    if nh == 0 || np == 0 {
        return Err(c.err("missing point or head layers"));
    }
    let mut shapes = Vec::with_capacity(ne + np + nh);
    for _ in 0..ne + np + nh {
        shapes.push((c.u32()?, c.u32()?));
    }
    let outs = |r: std::ops::Range<usize>| shapes[r].iter().map(|s| s.1).collect::<Vec<_>>();
    let arch = ArchConfig {
        edge_widths: outs(0..ne),
        point_widths: outs(ne..ne + np),
        head_widths: outs(ne + np..ne + np + nh - 1),
        k_neighbors,
        coord_scale_mm,
    };
    let mut w = ModelWeights::zeros(feature_set, &arch).map_err(|e| c.err(e.to_string()))?;
    let expected: Vec<(usize, usize)> = w
        .edge
        .iter()
        .chain(&w.point)
        .chain(&w.head)
        .map(|l| (l.fan_in(), l.fan_out()))
        .collect();
    if expected != shapes {
        return Err(c.err("layer shapes are inconsistent"));
    }
    let n = w.param_count();
    let raw = c.take(4 * n)?;
    if c.pos != bytes.len() {
        return Err(c.err("trailing bytes"));
    }
    let values: Vec<f64> = raw
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
        .collect();
    w.set_flat(&values)?;
    Ok(w)
}

pub fn save_weights(path: impl AsRef<Path>, w: &ModelWeights) -> Result<()> {
    write_atomic(path.as_ref(), &encode_weights(w))
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<ModelWeights> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_weights(&bytes, path)
}
