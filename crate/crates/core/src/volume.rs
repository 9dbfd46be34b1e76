//! Scalar volumes: HU windowing, isotropic resampling and slab MIPs.
//!
//! Voxel `(i, j, k)` spans `[i*sx, (i+1)*sx) x ...` in millimetres; its centre
//! sits at `(i + 0.5) * sx`. Data is stored x-fastest.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower bound of the HU window used for normalization.
pub const HU_WINDOW_LO: f32 = -1000.0;
/// Upper bound of the HU window used for normalization.
pub const HU_WINDOW_HI: f32 = 400.0;

/// Dense 3D grid with physical spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    dims: [usize; 3],
    spacing: [f64; 3],
    data: Vec<T>,
}

/// CT volume in Hounsfield units.
pub type Volume = Grid<i16>;
/// Binary mask in global volume coordinates, values in {0, 1}.
pub type Mask = Grid<u8>;
/// Volume windowed and scaled into [0, 1].
pub type NormalizedVolume = Grid<f32>;

impl<T: Copy> Grid<T> {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], data: Vec<T>) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidVolume(format!("zero dimension in {dims:?}")));
        }
        if spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidVolume(format!(
                "spacing must be positive, got {spacing:?}"
            )));
        }
        let n = dims[0] * dims[1] * dims[2];
        if data.len() != n {
            return Err(Error::InvalidVolume(format!(
                "expected {n} voxels for dims {dims:?}, got {}",
                data.len()
            )));
        }
        Ok(Self {
            dims,
            spacing,
            data,
        })
    }

    pub fn filled(dims: [usize; 3], spacing: [f64; 3], value: T) -> Result<Self> {
        let n = dims.iter().product();
        Self::new(dims, spacing, vec![value; n])
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> T {
        self.data[self.index(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: T) {
        let idx = self.index(i, j, k);
        self.data[idx] = v;
    }

    /// Inverse of [`Grid::index`].
    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.dims[0];
        let rest = idx / self.dims[0];
        [i, rest % self.dims[1], rest / self.dims[1]]
    }

    /// Centre of voxel `(i, j, k)` in millimetres.
    #[inline]
    pub fn voxel_center_mm(&self, ijk: [usize; 3]) -> [f64; 3] {
        [
            (ijk[0] as f64 + 0.5) * self.spacing[0],
            (ijk[1] as f64 + 0.5) * self.spacing[1],
            (ijk[2] as f64 + 0.5) * self.spacing[2],
        ]
    }

    /// Physical size of the grid along each axis.
    pub fn extent_mm(&self) -> [f64; 3] {
        [
            self.dims[0] as f64 * self.spacing[0],
            self.dims[1] as f64 * self.spacing[1],
            self.dims[2] as f64 * self.spacing[2],
        ]
    }

    pub fn voxel_volume_mm3(&self) -> f64 {
        self.spacing.iter().product()
    }

    /// Copy of the half-open index box `[lo, hi)`.
    pub fn crop(&self, lo: [usize; 3], hi: [usize; 3]) -> Result<Self> {
        for a in 0..3 {
            if lo[a] >= hi[a] || hi[a] > self.dims[a] {
                return Err(Error::InvalidVolume(format!(
                    "crop {lo:?}..{hi:?} outside dims {:?}",
                    self.dims
                )));
            }
        }
        let dims = [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]];
        let mut data = Vec::with_capacity(dims.iter().product());
        for k in lo[2]..hi[2] {
            for j in lo[1]..hi[1] {
                let start = self.index(lo[0], j, k);
                data.extend_from_slice(&self.data[start..start + dims[0]]);
            }
        }
        Self::new(dims, self.spacing, data)
    }

    /// Write `patch` back with its first voxel at `lo`.
    pub fn paste(&mut self, lo: [usize; 3], patch: &Self) -> Result<()> {
        let pd = patch.dims;
        if (0..3).any(|a| lo[a] + pd[a] > self.dims[a]) {
            return Err(Error::InvalidVolume(format!(
                "patch {pd:?} at {lo:?} exceeds dims {:?}",
                self.dims
            )));
        }
        for k in 0..pd[2] {
            for j in 0..pd[1] {
                let dst = self.index(lo[0], lo[1] + j, lo[2] + k);
                let src = patch.index(0, j, k);
                self.data[dst..dst + pd[0]].copy_from_slice(&patch.data[src..src + pd[0]]);
            }
        }
        Ok(())
    }
}

impl Mask {
    pub fn count_positive(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }
}

/// Map one HU value through the [-1000, 400] window into [0, 1].
#[inline]
pub fn normalize_hu_value(hu: f32) -> f32 {
    (hu.clamp(HU_WINDOW_LO, HU_WINDOW_HI) - HU_WINDOW_LO) / (HU_WINDOW_HI - HU_WINDOW_LO)
}

pub fn normalize_hu(v: &Volume) -> NormalizedVolume {
    let data = v.data.iter().map(|&h| normalize_hu_value(h as f32)).collect();
    Grid {
        dims: v.dims,
        spacing: v.spacing,
        data,
    }
}

fn resampled_dims(dims: [usize; 3], spacing: [f64; 3], target_mm: f64) -> [usize; 3] {
    let mut out = [1; 3];
    for a in 0..3 {
        out[a] = ((dims[a] as f64 * spacing[a] / target_mm).round() as usize).max(1);
    }
    out
}

fn check_target(target_mm: f64) -> Result<()> {
    if !(target_mm > 0.0 && target_mm.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "resampling target must be positive, got {target_mm}"
        )));
    }
    Ok(())
}

/// Per-axis interpolation taps: `(i0, i1, w)` with value `(1-w)*v[i0] + w*v[i1]`.
fn linear_taps(n_in: usize, s_in: f64, n_out: usize, s_out: f64) -> Vec<(usize, usize, f64)> {
    (0..n_out)
        .map(|j| {
            let c = ((j as f64 + 0.5) * s_out / s_in - 0.5).clamp(0.0, (n_in - 1) as f64);
            let i0 = c.floor() as usize;
            let i1 = (i0 + 1).min(n_in - 1);
            (i0, i1, c - i0 as f64)
        })
        .collect()
}

/// Trilinear resampling to isotropic `target_mm` spacing; HU rounded to the
/// nearest integer.
pub fn resample_isotropic(v: &Volume, target_mm: f64) -> Result<Volume> {
    check_target(target_mm)?;
    let out_dims = resampled_dims(v.dims, v.spacing, target_mm);
    let tx = linear_taps(v.dims[0], v.spacing[0], out_dims[0], target_mm);
    let ty = linear_taps(v.dims[1], v.spacing[1], out_dims[1], target_mm);
    let tz = linear_taps(v.dims[2], v.spacing[2], out_dims[2], target_mm);
    let mut data = Vec::with_capacity(out_dims.iter().product());
    for &(z0, z1, wz) in &tz {
        for &(y0, y1, wy) in &ty {
            for &(x0, x1, wx) in &tx {
                let f = |i, j, k| v.get(i, j, k) as f64;
                let c00 = f(x0, y0, z0) * (1.0 - wx) + f(x1, y0, z0) * wx;
                let c10 = f(x0, y1, z0) * (1.0 - wx) + f(x1, y1, z0) * wx;
                let c01 = f(x0, y0, z1) * (1.0 - wx) + f(x1, y0, z1) * wx;
                let c11 = f(x0, y1, z1) * (1.0 - wx) + f(x1, y1, z1) * wx;
                let c0 = c00 * (1.0 - wy) + c10 * wy;
                let c1 = c01 * (1.0 - wy) + c11 * wy;
                let val = c0 * (1.0 - wz) + c1 * wz;
                data.push(val.round().clamp(i16::MIN as f64, i16::MAX as f64) as i16);
            }
        }
    }
    Grid::new(out_dims, [target_mm; 3], data)
}

/// Nearest-neighbour resampling for label volumes.
pub fn resample_mask_nearest(m: &Mask, target_mm: f64) -> Result<Mask> {
    check_target(target_mm)?;
    let out_dims = resampled_dims(m.dims, m.spacing, target_mm);
    let nearest = |a: usize| -> Vec<usize> {
        (0..out_dims[a])
            .map(|j| {
                let c = (j as f64 + 0.5) * target_mm / m.spacing[a];
                (c.floor() as usize).min(m.dims[a] - 1)
            })
            .collect()
    };
    let (nx, ny, nz) = (nearest(0), nearest(1), nearest(2));
    let mut data = Vec::with_capacity(out_dims.iter().product());
    for &k in &nz {
        for &j in &ny {
            for &i in &nx {
                data.push(m.get(i, j, k));
            }
        }
    }
    Grid::new(out_dims, [target_mm; 3], data)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    /// The two remaining axes, in storage order.
    pub fn others(self) -> [usize; 2] {
        match self {
            Axis::X => [1, 2],
            Axis::Y => [0, 2],
            Axis::Z => [0, 1],
        }
    }
}

/// Maximum-intensity projection of a slab.
///
/// `data` is `width x height` with the lower remaining axis fastest, so an
/// axial (z) projection is indexed `x + nx * y`.
#[derive(Debug, Clone, PartialEq)]
pub struct MipImage {
    pub axis: Axis,
    pub slab_mm: f64,
    pub origin_slice: usize,
    pub slices: usize,
    pub width: usize,
    pub height: usize,
    pub data: Vec<i16>,
}

impl MipImage {
    pub fn get(&self, col: usize, row: usize) -> i16 {
        self.data[col + self.width * row]
    }
}

/// Number of voxels a slab of `slab_mm` covers along an axis of `spacing`.
pub fn slab_slices(slab_mm: f64, spacing: f64) -> usize {
    // Guard against 0.3 / 0.1 = 3.0000000000000004 style overshoot.
    ((slab_mm / spacing - 1e-9).ceil() as usize).max(1)
}

pub fn mip(v: &Volume, axis: Axis, slab_mm: f64, origin_slice: usize) -> Result<MipImage> {
    if !(slab_mm > 0.0 && slab_mm.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "slab thickness must be positive, got {slab_mm}"
        )));
    }
    let a = axis.index();
    let slices = slab_slices(slab_mm, v.spacing[a]);
    let len = v.dims[a];
    if origin_slice >= len || origin_slice + slices > len {
        return Err(Error::SlabOutOfBounds {
            origin: origin_slice,
            slices,
            len,
        });
    }
    let [ca, cb] = axis.others();
    let (width, height) = (v.dims[ca], v.dims[cb]);
    let mut data = vec![i16::MIN; width * height];
    for s in origin_slice..origin_slice + slices {
        for row in 0..height {
            for col in 0..width {
                let mut ijk = [0usize; 3];
                ijk[a] = s;
                ijk[ca] = col;
                ijk[cb] = row;
                let px = &mut data[col + width * row];
                *px = (*px).max(v.get(ijk[0], ijk[1], ijk[2]));
            }
        }
    }
    Ok(MipImage {
        axis,
        slab_mm,
        origin_slice,
        slices,
        width,
        height,
        data,
    })
}
