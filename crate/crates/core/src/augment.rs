//! Training-time augmentations.
//!
//! Image level: masked Gaussian noise, Gaussian blur and a global HU shift,
//! all on raw HU. Cloud level: a rotation in the transverse (x, y) plane and
//! a per-axis scale `diag(1 + g)` with `g ~ N(0, scale_sigma)`.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::volume::Volume;

const SCALE_ATTEMPTS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    /// Poisson rate of the noise mask.
    pub noise_lambda: f64,
    /// Noise standard deviation in HU.
    pub noise_sigma: f64,
    pub blur_prob: f64,
    /// Range of the Gaussian kernel standard deviation, in voxels.
    pub blur_alpha_range: [f64; 2],
    /// Shift drawn uniformly from `-hu_shift_range..=hu_shift_range` HU.
    pub hu_shift_range: i16,
    pub scale_sigma: f64,
    pub rotation: bool,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            noise_lambda: 0.05,
            noise_sigma: 30.0,
            blur_prob: 0.2,
            blur_alpha_range: [0.2, 0.8],
            hu_shift_range: 50,
            scale_sigma: 0.05,
            rotation: true,
            seed: 0,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.noise_lambda >= 0.0 && self.noise_lambda.is_finite()) {
            return bad("noise_lambda must be non-negative");
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.blur_prob) {
            return bad("blur_prob must be in [0, 1]");
        }
        let [a, b] = self.blur_alpha_range;
        if !(a > 0.0 && a <= b && b.is_finite()) {
            return bad("blur_alpha_range must be 0 < lo <= hi");
        }
        if self.hu_shift_range < 0 {
            return bad("hu_shift_range must be non-negative");
        }
        if !(self.scale_sigma >= 0.0 && self.scale_sigma.is_finite()) {
            return bad("scale_sigma must be non-negative");
        }
        Ok(())
    }
}

#[inline]
fn to_hu(v: f64) -> i16 {
    v.round().clamp(i16::MIN as f64, i16::MAX as f64) as i16
}

/// `x' = x + m * n` with `m = min(Poisson(lambda), 1)` and `n ~ N(0, sigma)`.
pub fn masked_gaussian_noise<R: Rng + ?Sized>(
    v: &Volume,
    cfg: &AugmentConfig,
    rng: &mut R,
) -> Result<Volume> {
    cfg.validate()?;
    let mut out = v.clone();
    if cfg.noise_lambda == 0.0 || cfg.noise_sigma == 0.0 {
        return Ok(out);
    }
    // P(Poisson(lambda) >= 1); the binarized mask is a Bernoulli draw.
    let p_on = -(-cfg.noise_lambda).exp_m1();
    let noise = Normal::new(0.0, cfg.noise_sigma).expect("validated sigma");
    for x in out.data_mut() {
        if rng.random::<f64>() < p_on {
            *x = to_hu(*x as f64 + noise.sample(rng));
        }
    }
    Ok(out)
}

/// Draws whether to blur and, if so, the kernel width.
pub fn draw_blur_alpha<R: Rng + ?Sized>(cfg: &AugmentConfig, rng: &mut R) -> Option<f64> {
    if rng.random::<f64>() >= cfg.blur_prob {
        return None;
    }
    let [lo, hi] = cfg.blur_alpha_range;
    Some(if lo == hi { lo } else { rng.random_range(lo..hi) })
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|w| *w /= sum);
    k
}

/// Separable Gaussian filter with edge replication, `sigma` in voxels.
pub fn gaussian_filter(v: &Volume, sigma: f64) -> Volume {
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as isize;
    let dims = v.dims();
    let mut buf: Vec<f64> = v.data().iter().map(|&x| x as f64).collect();
    let mut tmp = vec![0.0; buf.len()];
    let strides = [1, dims[0], dims[0] * dims[1]];
    for axis in 0..3 {
        let n = dims[axis] as isize;
        let stride = strides[axis];
        for (idx, out) in tmp.iter_mut().enumerate() {
            let pos = ((idx / stride) % dims[axis]) as isize;
            let base = idx - pos as usize * stride;
            let mut acc = 0.0;
            for (t, w) in kernel.iter().enumerate() {
                let q = (pos + t as isize - radius).clamp(0, n - 1) as usize;
                acc += w * buf[base + q * stride];
            }
            *out = acc;
        }
        std::mem::swap(&mut buf, &mut tmp);
    }
    let data = buf.into_iter().map(to_hu).collect();
    Volume::new(dims, v.spacing(), data).expect("same geometry")
}

/// With probability `blur_prob`, blur with `alpha ~ U(blur_alpha_range)`.
pub fn gaussian_blur<R: Rng + ?Sized>(v: &Volume, cfg: &AugmentConfig, rng: &mut R) -> Result<Volume> {
    cfg.validate()?;
    Ok(match draw_blur_alpha(cfg, rng) {
        Some(alpha) => gaussian_filter(v, alpha),
        None => v.clone(),
    })
}

pub fn draw_hu_shift<R: Rng + ?Sized>(cfg: &AugmentConfig, rng: &mut R) -> i16 {
    let r = cfg.hu_shift_range;
    if r == 0 {
        0
    } else {
        rng.random_range(-r..=r)
    }
}

pub fn apply_hu_shift(v: &Volume, shift: i16) -> Volume {
    let mut out = v.clone();
    out.data_mut()
        .iter_mut()
        .for_each(|x| *x = x.saturating_add(shift));
    out
}

/// Adds one uniformly drawn shift to every voxel.
pub fn hu_shift<R: Rng + ?Sized>(v: &Volume, cfg: &AugmentConfig, rng: &mut R) -> Result<Volume> {
    cfg.validate()?;
    let s = draw_hu_shift(cfg, rng);
    Ok(apply_hu_shift(v, s))
}

/// Noise, blur, then shift.
pub fn augment_volume<R: Rng + ?Sized>(v: &Volume, cfg: &AugmentConfig, rng: &mut R) -> Result<Volume> {
    let v = masked_gaussian_noise(v, cfg, rng)?;
    let v = gaussian_blur(&v, cfg, rng)?;
    hu_shift(&v, cfg, rng)
}

pub fn rotate_transverse_by(pc: &PointCloud, theta: f64) -> PointCloud {
    let (s, c) = theta.sin_cos();
    let mut out = pc.clone();
    for p in &mut out.points {
        let (x, y) = (p.x as f64, p.y as f64);
        p.x = (c * x - s * y) as f32;
        p.y = (s * x + c * y) as f32;
    }
    out
}

/// Rotation about the z axis by `theta ~ U[0, 2 pi)`.
pub fn rotate_transverse<R: Rng + ?Sized>(pc: &PointCloud, rng: &mut R) -> PointCloud {
    let theta = rng.random_range(0.0..std::f64::consts::TAU);
    rotate_transverse_by(pc, theta)
}

pub fn scale_by(pc: &PointCloud, factors: [f64; 3]) -> PointCloud {
    let mut out = pc.clone();
    for p in &mut out.points {
        p.x = (p.x as f64 * factors[0]) as f32;
        p.y = (p.y as f64 * factors[1]) as f32;
        p.z = (p.z as f64 * factors[2]) as f32;
    }
    out
}

/// Per-axis factors `1 + g`, redrawn while any is non-positive.
pub fn draw_scale_factors<R: Rng + ?Sized>(cfg: &AugmentConfig, rng: &mut R) -> Result<[f64; 3]> {
    if cfg.scale_sigma == 0.0 {
        return Ok([1.0; 3]);
    }
    let g = Normal::new(0.0, cfg.scale_sigma)
        .map_err(|e| Error::InvalidConfig(format!("scale_sigma: {e}")))?;
    let mut worst = 0.0;
    for _ in 0..SCALE_ATTEMPTS {
        let f = [1.0 + g.sample(rng), 1.0 + g.sample(rng), 1.0 + g.sample(rng)];
        if f.iter().all(|&x| x > 0.0) {
            return Ok(f);
        }
        worst = f.iter().cloned().fold(f64::INFINITY, f64::min);
    }
    Err(Error::DegenerateScale {
        factor: worst,
        attempts: SCALE_ATTEMPTS,
    })
}

pub fn anisotropic_scale<R: Rng + ?Sized>(
    pc: &PointCloud,
    cfg: &AugmentConfig,
    rng: &mut R,
) -> Result<PointCloud> {
    let f = draw_scale_factors(cfg, rng)?;
    Ok(scale_by(pc, f))
}

/// Rotation (if enabled) followed by anisotropic scaling.
pub fn augment_cloud<R: Rng + ?Sized>(
    pc: &PointCloud,
    cfg: &AugmentConfig,
    rng: &mut R,
) -> Result<PointCloud> {
    let pc = if cfg.rotation {
        rotate_transverse(pc, rng)
    } else {
        pc.clone()
    };
    anisotropic_scale(&pc, cfg, rng)
}

/// Endless stream of class-balanced index batches. Each batch holds
/// `batch / 2` positives and `batch / 2` negatives, drawn with replacement.
#[derive(Debug)]
pub struct BalancedBatches<R> {
    positives: Vec<usize>,
    negatives: Vec<usize>,
    half: usize,
    rng: R,
}

pub fn balanced_batches<R: Rng>(labels: &[u8], batch: usize, rng: R) -> Result<BalancedBatches<R>> {
    if batch < 2 || batch % 2 != 0 {
        return Err(Error::InvalidConfig(format!(
            "balanced batch size must be even and >= 2, got {batch}"
        )));
    }
    let positives: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] != 0).collect();
    let negatives: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 0).collect();
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::SingleClassDataset);
    }
    Ok(BalancedBatches {
        positives,
        negatives,
        half: batch / 2,
        rng,
    })
}

impl<R: Rng> Iterator for BalancedBatches<R> {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let mut out = Vec::with_capacity(2 * self.half);
        for _ in 0..self.half {
            out.push(self.positives[self.rng.random_range(0..self.positives.len())]);
        }
        for _ in 0..self.half {
            out.push(self.negatives[self.rng.random_range(0..self.negatives.len())]);
        }
        out.shuffle(&mut self.rng);
        Some(out)
    }
}
