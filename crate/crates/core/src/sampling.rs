//! Fixed-size resampling of candidate clouds.
//!
//! The RBF sampler draws points uniformly with replacement and keeps a draw
//! when `exp(-|x|^2 / 2 sigma^2)` exceeds a fresh `U(0, 1)` threshold, so the
//! kept density decays with distance from the candidate centre (the cloud
//! origin). A separate uniform draw from the mask points guarantees that the
//! candidate itself is always represented.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cloud::{CloudPoint, PointCloud};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    /// Output cloud size.
    pub m: usize,
    /// Guaranteed mask points; `None` means `min(mask points, m / 8)`.
    pub mask_quota: Option<usize>,
    /// Kernel width as a fraction of the candidate radius.
    pub sigma_ratio: f64,
    /// Rejection-loop cap; `None` means `200 * m`.
    pub max_draws: Option<usize>,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            m: 2048,
            mask_quota: None,
            sigma_ratio: 0.5,
            max_draws: None,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn with_m(m: usize) -> Self {
        Self {
            m,
            ..Self::default()
        }
    }

    pub fn max_draws(&self) -> usize {
        self.max_draws.unwrap_or(200 * self.m)
    }

    /// Mask quota for a cloud holding `mask_points` mask points.
    pub fn mask_quota_for(&self, mask_points: usize) -> usize {
        self.mask_quota
            .unwrap_or_else(|| mask_points.min(self.m / 8).max(1))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.m == 0 {
            return bad("sampler m must be positive".into());
        }
        if !(self.sigma_ratio > 0.0 && self.sigma_ratio.is_finite()) {
            return bad(format!("sigma_ratio must be positive, got {}", self.sigma_ratio));
        }
        if self.max_draws() < self.m {
            return bad(format!(
                "max_draws {} is below m {}",
                self.max_draws(),
                self.m
            ));
        }
        if let Some(q) = self.mask_quota {
            if q == 0 || q > self.m {
                return bad(format!("mask_quota {q} must be in 1..={}", self.m));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerMode {
    #[default]
    Rbf,
    Uniform,
}

impl std::str::FromStr for SamplerMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rbf" => Ok(Self::Rbf),
            "uniform" => Ok(Self::Uniform),
            other => Err(Error::InvalidConfig(format!("unknown sampler {other:?}"))),
        }
    }
}

/// Gaussian radial basis weight of `x` around `center`.
#[inline]
pub fn rbf_weight(x: [f64; 3], center: [f64; 3], sigma: f64) -> f64 {
    let d2: f64 = (0..3).map(|a| (x[a] - center[a]).powi(2)).sum();
    (-d2 / (2.0 * sigma * sigma)).exp()
}

/// Outcome of one Monte-Carlo draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RbfDraw {
    pub index: usize,
    pub weight: f64,
    pub accepted: bool,
}

/// Endless stream of RBF acceptance trials over `points` around the origin.
pub fn rbf_draws<'a, R: Rng + ?Sized>(
    points: &'a [CloudPoint],
    sigma: f64,
    rng: &'a mut R,
) -> impl Iterator<Item = RbfDraw> + 'a {
    let inv = 1.0 / (2.0 * sigma * sigma);
    std::iter::repeat_with(move || {
        let index = rng.random_range(0..points.len());
        let weight = (-points[index].dist2() * inv).exp();
        let tau: f64 = rng.random();
        RbfDraw {
            index,
            weight,
            accepted: weight > tau,
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct McSample {
    pub points: Vec<CloudPoint>,
    pub draws: usize,
}

/// Rejection-sample `count` points with `sigma = sigma_ratio * r`.
///
/// When the draw budget runs out first, the partial sample is returned inside
/// [`Error::DrawBudgetExhausted`].
pub fn mc_rbf_sample<R: Rng + ?Sized>(
    cloud: &PointCloud,
    count: usize,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<McSample> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let sigma = cfg.sigma_ratio * cloud.r_mm;
    if !(sigma > 0.0) {
        return Err(Error::InvalidConfig(format!("kernel width {sigma} must be positive")));
    }
    let budget = cfg.max_draws();
    let mut out = Vec::with_capacity(count);
    let mut draws = 0;
    if count > 0 {
        for d in rbf_draws(&cloud.points, sigma, rng).take(budget) {
            draws += 1;
            if d.accepted {
                out.push(cloud.points[d.index]);
                if out.len() == count {
                    break;
                }
            }
        }
    }
    if out.len() < count {
        return Err(Error::DrawBudgetExhausted {
            partial: out,
            requested: count,
            draws,
        });
    }
    Ok(McSample { points: out, draws })
}

/// `k` uniform draws with replacement from the mask points.
pub fn mask_uniform_sample<R: Rng + ?Sized>(
    cloud: &PointCloud,
    k: usize,
    rng: &mut R,
) -> Result<Vec<CloudPoint>> {
    let mask: Vec<&CloudPoint> = cloud.points.iter().filter(|p| p.is_mask).collect();
    if mask.is_empty() {
        return Err(Error::NoMaskPoints);
    }
    Ok((0..k)
        .map(|_| *mask[rng.random_range(0..mask.len())])
        .collect())
}

/// Bookkeeping for one sampled cloud, written next to the cloud file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleStats {
    pub mode: SamplerMode,
    pub sigma_mm: f64,
    pub source_points: usize,
    pub mask_quota: usize,
    pub draws: usize,
    pub rbf_accepted: usize,
    pub fallback_points: usize,
    pub mask_points: usize,
}

/// Mask quota plus RBF Monte-Carlo sample; always returns exactly `cfg.m`
/// points in shuffled order.
pub fn sample_candidate<R: Rng + ?Sized>(
    cloud: &PointCloud,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<(PointCloud, SampleStats)> {
    cfg.validate()?;
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let source_mask = cloud.mask_count();
    if source_mask == 0 {
        return Err(Error::NoMaskPoints);
    }
    let quota = cfg.mask_quota_for(source_mask).min(cfg.m);
    let mut points = mask_uniform_sample(cloud, quota, rng)?;
    let wanted = cfg.m - quota;
    let (rbf, draws) = match mc_rbf_sample(cloud, wanted, cfg, rng) {
        Ok(s) => (s.points, s.draws),
        Err(Error::DrawBudgetExhausted { partial, draws, .. }) => (partial, draws),
        Err(e) => return Err(e),
    };
    let rbf_accepted = rbf.len();
    points.extend(rbf);
    let fallback = cfg.m - points.len();
    for _ in 0..fallback {
        points.push(cloud.points[rng.random_range(0..cloud.len())]);
    }
    points.shuffle(rng);
    let stats = SampleStats {
        mode: SamplerMode::Rbf,
        sigma_mm: cfg.sigma_ratio * cloud.r_mm,
        source_points: cloud.len(),
        mask_quota: quota,
        draws,
        rbf_accepted,
        fallback_points: fallback,
        mask_points: points.iter().filter(|p| p.is_mask).count(),
    };
    let out = PointCloud::new(points, cloud.candidate_ref.clone(), cloud.r_mm)?;
    Ok((out, stats))
}

/// Baseline: `m` uniform draws with replacement from the whole cloud.
pub fn uniform_sample<R: Rng + ?Sized>(cloud: &PointCloud, m: usize, rng: &mut R) -> Result<PointCloud> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let points = (0..m)
        .map(|_| cloud.points[rng.random_range(0..cloud.len())])
        .collect();
    PointCloud::new(points, cloud.candidate_ref.clone(), cloud.r_mm)
}

/// Dispatch on the sampler mode, producing stats for either path.
pub fn sample_with_mode<R: Rng + ?Sized>(
    cloud: &PointCloud,
    mode: SamplerMode,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<(PointCloud, SampleStats)> {
    match mode {
        SamplerMode::Rbf => sample_candidate(cloud, cfg, rng),
        SamplerMode::Uniform => {
            cfg.validate()?;
            let out = uniform_sample(cloud, cfg.m, rng)?;
            let stats = SampleStats {
                mode,
                sigma_mm: cfg.sigma_ratio * cloud.r_mm,
                source_points: cloud.len(),
                mask_quota: 0,
                draws: cfg.m,
                rbf_accepted: 0,
                fallback_points: 0,
                mask_points: out.mask_count(),
            };
            Ok((out, stats))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn pt(x: f32, is_mask: bool) -> CloudPoint {
        CloudPoint {
            x,
            y: 0.0,
            z: 0.0,
            hu: 0.0,
            p: 0.5,
            is_mask,
        }
    }

    fn cloud(points: Vec<CloudPoint>, r: f64) -> PointCloud {
        PointCloud::new(points, "t", r).unwrap()
    }

    #[test]
    fn rbf_weight_values() {
        assert_eq!(rbf_weight([1.0, 2.0, 3.0], [1.0, 2.0, 3.0], 2.0), 1.0);
        let s = 1.7;
        assert!((rbf_weight([s, 0.0, 0.0], [0.0; 3], s) - 0.6065306597126334).abs() < 1e-12);
        assert!((rbf_weight([0.0, 3.0 * s, 0.0], [0.0; 3], s) - 0.011108996538242306).abs() < 1e-12);
    }

    #[test]
    fn origin_points_always_accepted() {
        let c = cloud(vec![pt(0.0, true); 5], 2.0);
        let cfg = SamplerConfig::with_m(64);
        let s = mc_rbf_sample(&c, 40, &cfg, &mut seeded(3)).unwrap();
        assert_eq!(s.points.len(), 40);
        assert_eq!(s.draws, 40);
    }

    #[test]
    fn budget_exhaustion_returns_partial() {
        let c = cloud(vec![pt(100.0, false), pt(0.0, true)], 1.0);
        let cfg = SamplerConfig {
            m: 10,
            max_draws: Some(10),
            ..SamplerConfig::default()
        };
        match mc_rbf_sample(&c, 10, &cfg, &mut seeded(1)) {
            Err(Error::DrawBudgetExhausted {
                partial,
                requested,
                draws,
            }) => {
                assert_eq!((requested, draws), (10, 10));
                assert!(partial.len() < 10);
                assert!(partial.iter().all(|p| p.x == 0.0));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn mask_sample_edge_cases() {
        let c = cloud(vec![pt(3.0, false), pt(1.0, true)], 1.0);
        let s = mask_uniform_sample(&c, 5, &mut seeded(0)).unwrap();
        assert_eq!(s, vec![pt(1.0, true); 5]);
        assert!(mask_uniform_sample(&c, 0, &mut seeded(0)).unwrap().is_empty());
        let no_mask = cloud(vec![pt(1.0, false)], 1.0);
        assert!(matches!(
            mask_uniform_sample(&no_mask, 1, &mut seeded(0)),
            Err(Error::NoMaskPoints)
        ));
        assert!(matches!(
            sample_candidate(&no_mask, &SamplerConfig::with_m(8), &mut seeded(0)),
            Err(Error::NoMaskPoints)
        ));
    }

    #[test]
    fn candidate_sample_is_exact_size_even_when_budget_runs_out() {
        let mut pts: Vec<_> = (0..500).map(|i| pt(50.0 + i as f32, false)).collect();
        pts.push(pt(0.0, true));
        let c = cloud(pts, 0.5);
        let cfg = SamplerConfig {
            m: 128,
            mask_quota: Some(16),
            ..SamplerConfig::default()
        };
        let (out, stats) = sample_candidate(&c, &cfg, &mut seeded(9)).unwrap();
        assert_eq!(out.len(), 128);
        assert!(out.mask_count() >= 16);
        assert_eq!(stats.draws, cfg.max_draws());
        assert_eq!(stats.rbf_accepted + stats.fallback_points + 16, 128);
        assert!(stats.fallback_points > 0);
    }

    #[test]
    fn degenerate_geometry_copies_inputs() {
        let pts: Vec<_> = (0..32).map(|i| CloudPoint { hu: i as f32 / 32.0, ..pt(0.0, i % 4 == 0) }).collect();
        let c = cloud(pts.clone(), 1.0);
        let (out, stats) = sample_candidate(&c, &SamplerConfig::with_m(32), &mut seeded(4)).unwrap();
        assert_eq!(out.len(), 32);
        assert_eq!(stats.fallback_points, 0);
        assert!(out.points.iter().all(|p| pts.contains(p)));
    }

    #[test]
    fn deterministic_given_seed() {
        let pts: Vec<_> = (0..300).map(|i| pt((i % 17) as f32 - 8.0, i % 9 == 0)).collect();
        let c = cloud(pts, 4.0);
        let cfg = SamplerConfig::with_m(256);
        let a = sample_candidate(&c, &cfg, &mut seeded(42)).unwrap();
        let b = sample_candidate(&c, &cfg, &mut seeded(42)).unwrap();
        assert_eq!(a, b);
        let u1 = uniform_sample(&c, 100, &mut seeded(5)).unwrap();
        let u2 = uniform_sample(&c, 100, &mut seeded(5)).unwrap();
        assert_eq!(u1, u2);
        assert!(u1.points.iter().all(|p| c.points.contains(p)));
    }

    #[test]
    fn config_validation() {
        assert!(SamplerConfig::default().validate().is_ok());
        assert!(SamplerConfig { m: 0, ..Default::default() }.validate().is_err());
        assert!(SamplerConfig { sigma_ratio: 0.0, ..Default::default() }.validate().is_err());
        assert!(SamplerConfig { max_draws: Some(10), ..Default::default() }.validate().is_err());
        assert!(SamplerConfig { mask_quota: Some(0), ..Default::default() }.validate().is_err());
        assert_eq!(SamplerConfig::default().mask_quota_for(10), 10);
        assert_eq!(SamplerConfig::default().mask_quota_for(10_000), 256);
        assert_eq!(SamplerConfig::default().max_draws(), 409_600);
    }
}
