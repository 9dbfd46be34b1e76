//! On-disk formats for point clouds and candidate manifests.
//!
//! `NPCD1` binary clouds: magic `NPCD1`, point count `u32`, then per point
//! `x, y, z, hu, p` as `f32` followed by a `u8` mask flag, all little-endian.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cloud::{CloudPoint, PointCloud};
use crate::error::{Error, Result};
use crate::nvol::write_atomic;

const NPCD_MAGIC: &[u8] = b"NPCD1";
const POINT_BYTES: usize = 21;

pub fn encode_npcd(pc: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(NPCD_MAGIC.len() + 4 + POINT_BYTES * pc.len());
    out.extend(NPCD_MAGIC);
    out.extend((pc.len() as u32).to_le_bytes());
    for p in &pc.points {
        for v in [p.x, p.y, p.z, p.hu, p.p] {
            out.extend(v.to_le_bytes());
        }
        out.push(p.is_mask as u8);
    }
    out
}

/// The format carries no radius; `r_mm` of the result is 0.
pub fn decode_npcd(bytes: &[u8], candidate_ref: &str) -> Result<PointCloud> {
    let bad = |m: String| Error::MalformedCloudFile(format!("{candidate_ref}: {m}"));
    if bytes.len() < NPCD_MAGIC.len() + 4 || &bytes[..NPCD_MAGIC.len()] != NPCD_MAGIC {
        return Err(bad("bad magic".into()));
    }
    let n = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    let body = &bytes[9..];
    if body.len() != n * POINT_BYTES {
        return Err(bad(format!(
            "expected {} payload bytes for {n} points, found {}",
            n * POINT_BYTES,
            body.len()
        )));
    }
    let mut points = Vec::with_capacity(n);
    for rec in body.chunks_exact(POINT_BYTES) {
        let f = |i: usize| f32::from_le_bytes(rec[4 * i..4 * i + 4].try_into().unwrap());
        let flag = rec[20];
        if flag > 1 {
            return Err(bad(format!("mask flag {flag}")));
        }
        let p = CloudPoint {
            x: f(0),
            y: f(1),
            z: f(2),
            hu: f(3),
            p: f(4),
            is_mask: flag == 1,
        };
        if ![p.x, p.y, p.z, p.hu, p.p].iter().all(|v| v.is_finite()) {
            return Err(bad("non-finite value".into()));
        }
        points.push(p);
    }
    PointCloud::new(points, candidate_ref, 0.0).map_err(|_| bad("no points".into()))
}

pub fn write_npcd(path: impl AsRef<Path>, pc: &PointCloud) -> Result<()> {
    write_atomic(path.as_ref(), &encode_npcd(pc))
}

pub fn read_npcd(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    decode_npcd(&bytes, &name)
}

pub fn cloud_to_csv(pc: &PointCloud) -> String {
    let mut s = String::from("x,y,z,hu,p,is_mask\n");
    for p in &pc.points {
        let _ = writeln!(s, "{},{},{},{},{},{}", p.x, p.y, p.z, p.hu, p.p, p.is_mask as u8);
    }
    s
}

pub fn cloud_from_csv(text: &str, candidate_ref: &str) -> Result<PointCloud> {
    let bad = |line: usize, m: &str| Error::MalformedCloudFile(format!("{candidate_ref}:{line}: {m}"));
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("x,y,z,hu,p,is_mask") {
        return Err(bad(1, "missing header"));
    }
    let mut points = Vec::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 6 {
            return Err(bad(i + 2, "expected 6 columns"));
        }
        let mut v = [0f32; 5];
        for (k, c) in cols[..5].iter().enumerate() {
            v[k] = c.parse().map_err(|_| bad(i + 2, "bad number"))?;
        }
        let is_mask = match cols[5] {
            "0" => false,
            "1" => true,
            _ => return Err(bad(i + 2, "bad mask flag")),
        };
        points.push(CloudPoint {
            x: v[0],
            y: v[1],
            z: v[2],
            hu: v[3],
            p: v[4],
            is_mask,
        });
    }
    PointCloud::new(points, candidate_ref, 0.0).map_err(|_| bad(1, "no points"))
}

/// ASCII PLY with mask points red and background points blue.
pub fn cloud_to_ply(pc: &PointCloud) -> String {
    let mut s = String::new();
    s.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(s, "element vertex {}", pc.len());
    s.push_str(
        "property float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n",
    );
    for p in &pc.points {
        let rgb = if p.is_mask { "255 0 0" } else { "0 0 255" };
        let _ = writeln!(s, "{} {} {} {rgb}", p.x, p.y, p.z);
    }
    s
}

/// One line of a candidate manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub id: String,
    pub scan_id: String,
    /// Relative to the manifest's directory.
    pub mask_path: String,
    pub p: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<u8>,
    /// Inference fold of a training candidate; absent for test candidates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fold: Option<usize>,
}

pub fn manifest_to_jsonl(records: &[CandidateRecord]) -> Result<String> {
    let mut s = String::new();
    for r in records {
        s.push_str(&serde_json::to_string(r)?);
        s.push('\n');
    }
    Ok(s)
}

pub fn manifest_from_jsonl(text: &str, path: &Path) -> Result<Vec<CandidateRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Malformed {
                kind: "manifest",
                path: path.to_path_buf(),
                reason: format!("line {}: {e}", i + 1),
            })
        })
        .collect()
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<CandidateRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    manifest_from_jsonl(&text, path)
}

pub fn write_manifest(path: impl AsRef<Path>, records: &[CandidateRecord]) -> Result<()> {
    write_atomic(path.as_ref(), manifest_to_jsonl(records)?.as_bytes())
}
