//! Candidate regions of interest and their conversion into point clouds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{Mask, Volume};

/// Default padding added around the candidate mask, in mm.
pub const DEFAULT_PADDING_MM: f64 = 16.0;
/// Default HU band kept when building a cloud.
pub const DEFAULT_HU_BAND: (f64, f64) = (-400.0, 400.0);

/// A detector proposal: a binary mask with one probability.
///
/// The mask is held sparsely as the list of positive voxel indices of a grid
/// with the same geometry as the scan.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub id: String,
    dims: [usize; 3],
    spacing: [f64; 3],
    voxels: Vec<[usize; 3]>,
    p: f64,
    center_mm: [f64; 3],
    r_mm: f64,
}

impl Candidate {
    pub fn from_mask(id: impl Into<String>, mask: &Mask, p: f64) -> Result<Self> {
        let voxels = mask
            .data()
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0)
            .map(|(idx, _)| mask.coords(idx))
            .collect();
        Self::from_voxels(id, mask.dims(), mask.spacing(), voxels, p)
    }

    /// `voxels` must lie inside `dims`; duplicates are removed.
    pub fn from_voxels(
        id: impl Into<String>,
        dims: [usize; 3],
        spacing: [f64; 3],
        mut voxels: Vec<[usize; 3]>,
        p: f64,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidConfig(format!(
                "candidate probability {p} outside [0, 1]"
            )));
        }
        if voxels
            .iter()
            .any(|v| (0..3).any(|a| v[a] >= dims[a]))
        {
            return Err(Error::InvalidVolume("mask voxel outside grid".into()));
        }
        // Linear x-fastest order, matching a dense scan of the mask.
        voxels.sort_by_key(|v| (v[2], v[1], v[0]));
        voxels.dedup();
        if voxels.is_empty() {
            return Err(Error::EmptyMask);
        }
        let n = voxels.len() as f64;
        let mut center = [0.0; 3];
        for v in &voxels {
            for a in 0..3 {
                center[a] += (v[a] as f64 + 0.5) * spacing[a];
            }
        }
        center.iter_mut().for_each(|c| *c /= n);
        let volume_mm3 = n * spacing.iter().product::<f64>();
        let r_mm = (3.0 * volume_mm3 / (4.0 * std::f64::consts::PI)).cbrt();
        Ok(Self {
            id: id.into(),
            dims,
            spacing,
            voxels,
            p,
            center_mm: center,
            r_mm,
        })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn center_mm(&self) -> [f64; 3] {
        self.center_mm
    }

    /// Radius of the sphere with the same volume as the mask.
    pub fn r_mm(&self) -> f64 {
        self.r_mm
    }

    pub fn voxels(&self) -> &[[usize; 3]] {
        &self.voxels
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn to_mask(&self) -> Mask {
        let mut m = Mask::filled(self.dims, self.spacing, 0).expect("candidate geometry is valid");
        for v in &self.voxels {
            m.set(v[0], v[1], v[2], 1);
        }
        m
    }
}

/// Axis-aligned box in mm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoiBox {
    pub min_mm: [f64; 3],
    pub max_mm: [f64; 3],
}

impl RoiBox {
    /// Half-open voxel index range whose centres fall inside the box.
    pub fn voxel_range(&self, dims: [usize; 3], spacing: [f64; 3]) -> ([usize; 3], [usize; 3]) {
        let mut lo = [0; 3];
        let mut hi = [0; 3];
        for a in 0..3 {
            let first = (self.min_mm[a] / spacing[a] - 0.5).ceil().max(0.0) as usize;
            let end = (self.max_mm[a] / spacing[a] - 0.5).ceil().max(0.0) as usize;
            lo[a] = first.min(dims[a]);
            hi[a] = end.min(dims[a]);
        }
        (lo, hi)
    }

    pub fn size_mm(&self) -> [f64; 3] {
        [
            self.max_mm[0] - self.min_mm[0],
            self.max_mm[1] - self.min_mm[1],
            self.max_mm[2] - self.min_mm[2],
        ]
    }
}

/// Tight voxel-face box around the mask, grown by `padding_mm` and clipped
/// to the scan extent.
pub fn roi_bbox(c: &Candidate, padding_mm: f64) -> Result<RoiBox> {
    if c.voxels.is_empty() {
        return Err(Error::EmptyMask);
    }
    let mut lo = [usize::MAX; 3];
    let mut hi = [0usize; 3];
    for v in &c.voxels {
        for a in 0..3 {
            lo[a] = lo[a].min(v[a]);
            hi[a] = hi[a].max(v[a] + 1);
        }
    }
    let mut b = RoiBox {
        min_mm: [0.0; 3],
        max_mm: [0.0; 3],
    };
    for a in 0..3 {
        let extent = c.dims[a] as f64 * c.spacing[a];
        b.min_mm[a] = (lo[a] as f64 * c.spacing[a] - padding_mm).max(0.0);
        b.max_mm[a] = (hi[a] as f64 * c.spacing[a] + padding_mm).min(extent);
    }
    Ok(b)
}

/// One point of a candidate cloud: coordinates relative to the candidate
/// centre, rescaled density, detector probability and mask membership.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CloudPoint {
    pub x: f32,
    pub y: f32,
    pub z: f32,
    pub hu: f32,
    pub p: f32,
    pub is_mask: bool,
}

impl CloudPoint {
    #[inline]
    pub fn dist2(&self) -> f64 {
        let (x, y, z) = (self.x as f64, self.y as f64, self.z as f64);
        x * x + y * y + z * z
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<CloudPoint>,
    pub candidate_ref: String,
    pub r_mm: f64,
}

impl PointCloud {
    pub fn new(points: Vec<CloudPoint>, candidate_ref: impl Into<String>, r_mm: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        Ok(Self {
            points,
            candidate_ref: candidate_ref.into(),
            r_mm,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn mask_count(&self) -> usize {
        self.points.iter().filter(|p| p.is_mask).count()
    }

    /// Centroid of the mask points, if any.
    pub fn mask_centroid(&self) -> Option<[f64; 3]> {
        let mut acc = [0.0; 3];
        let mut n = 0usize;
        for p in self.points.iter().filter(|p| p.is_mask) {
            acc[0] += p.x as f64;
            acc[1] += p.y as f64;
            acc[2] += p.z as f64;
            n += 1;
        }
        (n > 0).then(|| acc.map(|a| a / n as f64))
    }
}

/// Affine map of `[lo, hi]` onto `[-1, 1]`, clamped.
#[inline]
pub fn rescale_hu(hu: f64, lo: f64, hi: f64) -> f32 {
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    ((hu - mid) / half).clamp(-1.0, 1.0) as f32
}

/// Build the featurized cloud for `c` from the voxels of `box_` in `v`.
///
/// A voxel contributes a point when its HU lies in `[hu_lo, hu_hi]` or when it
/// belongs to the candidate mask.
pub fn extract_points(
    v: &Volume,
    c: &Candidate,
    box_: &RoiBox,
    hu_lo: f64,
    hu_hi: f64,
) -> Result<PointCloud> {
    if !(hu_lo < hu_hi) {
        return Err(Error::InvalidConfig(format!(
            "HU band [{hu_lo}, {hu_hi}] is empty"
        )));
    }
    if v.dims() != c.dims {
        return Err(Error::ShapeMismatch(format!(
            "volume dims {:?} vs candidate grid {:?}",
            v.dims(),
            c.dims
        )));
    }
    let (lo, hi) = box_.voxel_range(v.dims(), v.spacing());
    let bd = [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]];
    let mut in_mask = vec![false; bd.iter().product()];
    let mut any = false;
    for m in &c.voxels {
        if (0..3).all(|a| m[a] >= lo[a] && m[a] < hi[a]) {
            let l = (m[0] - lo[0]) + bd[0] * ((m[1] - lo[1]) + bd[1] * (m[2] - lo[2]));
            in_mask[l] = true;
            any = true;
        }
    }
    if !any {
        return Err(Error::EmptyMask);
    }
    let center = c.center_mm;
    let p = c.p as f32;
    let mut points = Vec::new();
    let mut l = 0;
    for k in lo[2]..hi[2] {
        for j in lo[1]..hi[1] {
            for i in lo[0]..hi[0] {
                let hu = v.get(i, j, k) as f64;
                let is_mask = in_mask[l];
                l += 1;
                if !(is_mask || (hu >= hu_lo && hu <= hu_hi)) {
                    continue;
                }
                let pos = v.voxel_center_mm([i, j, k]);
                points.push(CloudPoint {
                    x: (pos[0] - center[0]) as f32,
                    y: (pos[1] - center[1]) as f32,
                    z: (pos[2] - center[2]) as f32,
                    hu: rescale_hu(hu, hu_lo, hu_hi),
                    p,
                    is_mask,
                });
            }
        }
    }
    PointCloud::new(points, c.id.clone(), c.r_mm)
}

/// Number of voxels the box covers.
pub fn box_voxel_count(box_: &RoiBox, dims: [usize; 3], spacing: [f64; 3]) -> usize {
    let (lo, hi) = box_.voxel_range(dims, spacing);
    (0..3).map(|a| hi[a] - lo[a]).product()
}
