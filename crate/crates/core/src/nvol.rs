//! NVOL on-disk volume format.
//!
//! ```text
//! NVOL1
//! dims nx ny nz
//! spacing sx sy sz
//! dtype i16|u8
//!
//! <raw little-endian payload, x-fastest>
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::volume::Grid;

const MAGIC: &[u8] = b"NVOL1\n";

/// Voxel types the NVOL container can hold.
pub trait NvolElement: Copy + Sized {
    const DTYPE: &'static str;
    const SIZE: usize;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
    fn validate(self) -> bool {
        true
    }
}

impl NvolElement for i16 {
    const DTYPE: &'static str = "i16";
    const SIZE: usize = 2;
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        i16::from_le_bytes([bytes[0], bytes[1]])
    }
}

impl NvolElement for u8 {
    const DTYPE: &'static str = "u8";
    const SIZE: usize = 1;
    fn write_le(self, out: &mut Vec<u8>) {
        out.push(self);
    }
    fn read_le(bytes: &[u8]) -> Self {
        bytes[0]
    }
    // Masks only.
    fn validate(self) -> bool {
        self <= 1
    }
}

pub fn encode<T: NvolElement>(grid: &Grid<T>) -> Vec<u8> {
    let [nx, ny, nz] = grid.dims();
    let [sx, sy, sz] = grid.spacing();
    let mut out = Vec::with_capacity(64 + grid.len() * T::SIZE);
    out.extend_from_slice(MAGIC);
    let header = format!(
        "dims {nx} {ny} {nz}\nspacing {sx} {sy} {sz}\ndtype {}\n\n",
        T::DTYPE
    );
    out.extend_from_slice(header.as_bytes());
    for &v in grid.data() {
        v.write_le(&mut out);
    }
    out
}

fn bad(path: &Path, reason: impl Into<String>) -> Error {
    Error::Malformed {
        kind: "NVOL",
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Decode an NVOL buffer. `path` is only used for error messages.
pub fn decode<T: NvolElement>(bytes: &[u8], path: &Path) -> Result<Grid<T>> {
    let rest = bytes
        .strip_prefix(MAGIC)
        .ok_or_else(|| bad(path, "missing NVOL1 magic"))?;
    let mut dims = None;
    let mut spacing = None;
    let mut dtype = None;
    let mut pos = 0;
    loop {
        let nl = rest[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| bad(path, "unterminated header"))?;
        let line = std::str::from_utf8(&rest[pos..pos + nl]).map_err(|_| bad(path, "non-ASCII header"))?;
        pos += nl + 1;
        if line.is_empty() {
            break;
        }
        let mut parts = line.split_whitespace();
        let key = parts.next().unwrap_or_default();
        let vals: Vec<&str> = parts.collect();
        match key {
            "dims" => {
                let d: Vec<usize> = vals
                    .iter()
                    .map(|s| s.parse())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| bad(path, format!("bad dims line {line:?}")))?;
                let d: [usize; 3] = d.try_into().map_err(|_| bad(path, "dims needs 3 values"))?;
                dims = Some(d);
            }
            "spacing" => {
                let s: Vec<f64> = vals
                    .iter()
                    .map(|s| s.parse())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| bad(path, format!("bad spacing line {line:?}")))?;
                let s: [f64; 3] = s.try_into().map_err(|_| bad(path, "spacing needs 3 values"))?;
                spacing = Some(s);
            }
            "dtype" => dtype = vals.first().map(|s| s.to_string()),
            other => return Err(bad(path, format!("unknown header key {other:?}"))),
        }
    }
    let dims = dims.ok_or_else(|| bad(path, "missing dims"))?;
    let spacing = spacing.ok_or_else(|| bad(path, "missing spacing"))?;
    match dtype.as_deref() {
        Some(d) if d == T::DTYPE => {}
        other => {
            return Err(bad(
                path,
                format!("expected dtype {}, found {other:?}", T::DTYPE),
            ))
        }
    }
    let payload = &rest[pos..];
    let n: usize = dims.iter().product();
    if payload.len() != n * T::SIZE {
        return Err(bad(
            path,
            format!("payload is {} bytes, expected {}", payload.len(), n * T::SIZE),
        ));
    }
    let data: Vec<T> = payload.chunks_exact(T::SIZE).map(T::read_le).collect();
    if !data.iter().all(|v| v.validate()) {
        return Err(bad(path, "mask values must be 0 or 1"));
    }
    Grid::new(dims, spacing, data).map_err(|e| bad(path, e.to_string()))
}

pub fn read<T: NvolElement>(path: impl AsRef<Path>) -> Result<Grid<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

pub fn write<T: NvolElement>(path: impl AsRef<Path>, grid: &Grid<T>) -> Result<()> {
    write_atomic(path.as_ref(), &encode(grid))
}

/// Write via a sibling temp file and rename so readers never see partial files.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
