//! Synthetic chest phantoms and a parametric detector stand-in.
//!
//! A phantom is a block of lung parenchyma bounded on the low-x side by a
//! chest wall (with a thin air gap at the very edge), crossed by vessels and
//! seeded with spherical nodules. Some nodules sit against the wall.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cloud::{Candidate, DEFAULT_HU_BAND};
use crate::error::{Error, Result};
use crate::eval::{match_candidates, MatchConfig, Outcome, ScoredCandidate, Truth};
use crate::rng::{derived, seeded};
use crate::volume::Volume;

const MAX_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomConfig {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub nodule_count: usize,
    pub nodule_diameter_mm: [f64; 2],
    pub nodule_hu: [i16; 2],
    /// Fraction of nodules placed tangent to the wall.
    pub subpleural_fraction: f64,
    pub vessel_count: usize,
    pub vessel_radius_mm: [f64; 2],
    pub vessel_length_mm: [f64; 2],
    pub vessel_hu: [i16; 2],
    pub wall_thickness_mm: f64,
    pub wall_hu: i16,
    /// Amplitude of a sinusoidal bulge of the wall surface along y.
    pub wall_curvature_mm: f64,
    /// Air gap between the volume edge and the wall.
    pub air_gap_mm: f64,
    pub air_hu: i16,
    pub parenchyma_hu: i16,
    /// Standard deviation of additive Gaussian noise.
    pub noise_hu: f64,
    pub seed: u64,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        Self {
            dims: [64, 64, 64],
            spacing: [1.0; 3],
            nodule_count: 3,
            nodule_diameter_mm: [2.5, 12.0],
            nodule_hu: [-100, 100],
            subpleural_fraction: 0.3,
            vessel_count: 6,
            vessel_radius_mm: [1.0, 2.5],
            vessel_length_mm: [20.0, 60.0],
            vessel_hu: [-50, 50],
            wall_thickness_mm: 8.0,
            wall_hu: 40,
            wall_curvature_mm: 0.0,
            air_gap_mm: 2.0,
            air_hu: -1000,
            parenchyma_hu: -850,
            noise_hu: 15.0,
            seed: 0,
        }
    }
}

fn check_range(name: &str, r: [f64; 2], positive: bool) -> Result<()> {
    let ok = r[0] <= r[1] && r[0].is_finite() && r[1].is_finite() && (!positive || r[0] > 0.0);
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("{name} range {r:?} is invalid")))
    }
}

impl PhantomConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dims.contains(&0) || self.spacing.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::InvalidConfig("phantom dims and spacing must be positive".into()));
        }
        check_range("nodule diameter", self.nodule_diameter_mm, true)?;
        check_range("vessel radius", self.vessel_radius_mm, true)?;
        check_range("vessel length", self.vessel_length_mm, true)?;
        if self.nodule_hu[0] > self.nodule_hu[1] || self.vessel_hu[0] > self.vessel_hu[1] {
            return Err(Error::InvalidConfig("HU ranges must be ordered".into()));
        }
        if !(0.0..=1.0).contains(&self.subpleural_fraction) {
            return Err(Error::InvalidConfig("subpleural_fraction must be in [0, 1]".into()));
        }
        if self.wall_thickness_mm < 0.0 || self.air_gap_mm < 0.0 || self.noise_hu < 0.0 {
            return Err(Error::InvalidConfig("wall, gap and noise must be non-negative".into()));
        }
        Ok(())
    }

    /// x coordinate (mm) of the wall's inner surface at height `y`.
    pub fn wall_surface_x(&self, y: f64) -> f64 {
        let ly = self.dims[1] as f64 * self.spacing[1];
        self.air_gap_mm
            + self.wall_thickness_mm
            + self.wall_curvature_mm * (std::f64::consts::TAU * y / ly).sin()
    }

    fn wall_surface_max(&self) -> f64 {
        self.air_gap_mm + self.wall_thickness_mm + self.wall_curvature_mm.abs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthNodule {
    pub id: String,
    pub center_mm: [f64; 3],
    pub diameter_mm: f64,
    pub hu: i16,
    pub subpleural: bool,
}

impl TruthNodule {
    pub fn to_truth(&self, scan_id: &str) -> Truth {
        Truth {
            id: self.id.clone(),
            scan_id: scan_id.to_string(),
            center_mm: self.center_mm,
            diameter_mm: self.diameter_mm,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub volume: Volume,
    pub truths: Vec<TruthNodule>,
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..r[1])
    }
}

fn uniform_hu<R: Rng + ?Sized>(rng: &mut R, r: [i16; 2]) -> i16 {
    rng.random_range(r[0]..=r[1])
}

/// Voxel index range whose centres may lie within `radius` of `c`.
fn voxel_bounds(c: [f64; 3], radius: f64, dims: [usize; 3], s: [f64; 3]) -> ([usize; 3], [usize; 3]) {
    let mut lo = [0; 3];
    let mut hi = [0; 3];
    for a in 0..3 {
        let l = ((c[a] - radius) / s[a] - 0.5).floor().max(0.0) as usize;
        let h = ((c[a] + radius) / s[a] - 0.5).ceil() + 1.0;
        lo[a] = l.min(dims[a]);
        hi[a] = (h.max(0.0) as usize).min(dims[a]);
    }
    (lo, hi)
}

fn for_voxels_near(
    v: &Volume,
    c: [f64; 3],
    radius: f64,
    mut f: impl FnMut([usize; 3], [f64; 3]),
) {
    let (lo, hi) = voxel_bounds(c, radius, v.dims(), v.spacing());
    for k in lo[2]..hi[2] {
        for j in lo[1]..hi[1] {
            for i in lo[0]..hi[0] {
                f([i, j, k], v.voxel_center_mm([i, j, k]));
            }
        }
    }
}

fn dist2(a: [f64; 3], b: [f64; 3]) -> f64 {
    (0..3).map(|i| (a[i] - b[i]).powi(2)).sum()
}

/// Squared distance from `p` to the segment `a..b`.
fn segment_dist2(p: [f64; 3], a: [f64; 3], b: [f64; 3]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let ap = [p[0] - a[0], p[1] - a[1], p[2] - a[2]];
    let len2: f64 = ab.iter().map(|x| x * x).sum();
    let t = if len2 == 0.0 {
        0.0
    } else {
        ((0..3).map(|i| ab[i] * ap[i]).sum::<f64>() / len2).clamp(0.0, 1.0)
    };
    dist2(p, [a[0] + t * ab[0], a[1] + t * ab[1], a[2] + t * ab[2]])
}

/// Render a phantom. Deterministic in `cfg` and the RNG state.
pub fn gen_phantom<R: Rng + ?Sized>(cfg: &PhantomConfig, rng: &mut R) -> Result<Phantom> {
    cfg.validate()?;
    let mut v = Volume::filled(cfg.dims, cfg.spacing, cfg.parenchyma_hu)?;
    let ext = v.extent_mm();

    for _ in 0..cfg.vessel_count {
        let radius = uniform(rng, cfg.vessel_radius_mm);
        let len = uniform(rng, cfg.vessel_length_mm);
        let mid = [0, 1, 2].map(|a| rng.random_range(0.0..ext[a]));
        let mut dir: [f64; 3] = [0, 1, 2].map(|_| StandardNormal.sample(rng));
        let n = dir.iter().map(|d| d * d).sum::<f64>().sqrt().max(1e-12);
        dir.iter_mut().for_each(|d| *d /= n);
        let a = [0, 1, 2].map(|i| mid[i] - 0.5 * len * dir[i]);
        let b = [0, 1, 2].map(|i| mid[i] + 0.5 * len * dir[i]);
        let hu = uniform_hu(rng, cfg.vessel_hu);
        let reach = 0.5 * len + radius;
        let r2 = radius * radius;
        let mut hits = Vec::new();
        for_voxels_near(&v, mid, reach, |ijk, p| {
            if segment_dist2(p, a, b) <= r2 {
                hits.push(ijk);
            }
        });
        for [i, j, k] in hits {
            v.set(i, j, k, hu);
        }
    }

    let mut truths: Vec<TruthNodule> = Vec::with_capacity(cfg.nodule_count);
    for n in 0..cfg.nodule_count {
        let d = uniform(rng, cfg.nodule_diameter_mm);
        let r = 0.5 * d;
        let subpleural = rng.random_bool(cfg.subpleural_fraction);
        let mut placed = None;
        for _ in 0..MAX_ATTEMPTS {
            let y = rng.random_range(0.0..ext[1]);
            let z = rng.random_range(0.0..ext[2]);
            let x = if subpleural {
                cfg.wall_surface_x(y) + r
            } else {
                let lo = cfg.wall_surface_max() + r + 2.0;
                let hi = ext[0] - r - 1.0;
                if lo >= hi {
                    continue;
                }
                rng.random_range(lo..hi)
            };
            let c = [x, y, z];
            let inside = (0..3).all(|a| c[a] - r >= 1.0 && c[a] + r <= ext[a] - 1.0);
            let apart = truths
                .iter()
                .all(|t| dist2(t.center_mm, c).sqrt() >= r + 0.5 * t.diameter_mm + 2.0);
            if inside && apart {
                placed = Some(c);
                break;
            }
        }
        let center_mm = placed.ok_or_else(|| Error::PlacementFailure {
            what: format!("nodule {n} ({d:.1} mm)"),
            attempts: MAX_ATTEMPTS,
        })?;
        truths.push(TruthNodule {
            id: format!("n{n}"),
            center_mm,
            diameter_mm: d,
            hu: uniform_hu(rng, cfg.nodule_hu),
            subpleural,
        });
    }
    for t in &truths {
        let r2 = t.diameter_mm * t.diameter_mm / 4.0;
        let mut hits = Vec::new();
        for_voxels_near(&v, t.center_mm, 0.5 * t.diameter_mm, |ijk, p| {
            if dist2(p, t.center_mm) <= r2 {
                hits.push(ijk);
            }
        });
        for [i, j, k] in hits {
            v.set(i, j, k, t.hu);
        }
    }

    let [nx, ny, nz] = cfg.dims;
    for k in 0..nz {
        for j in 0..ny {
            let y = (j as f64 + 0.5) * cfg.spacing[1];
            let surface = cfg.wall_surface_x(y);
            for i in 0..nx {
                let x = (i as f64 + 0.5) * cfg.spacing[0];
                if x < cfg.air_gap_mm {
                    v.set(i, j, k, cfg.air_hu);
                } else if x < surface {
                    v.set(i, j, k, cfg.wall_hu);
                }
            }
        }
    }

    if cfg.noise_hu > 0.0 {
        let noise = Normal::new(0.0, cfg.noise_hu).expect("validated sigma");
        for x in v.data_mut() {
            let n: f64 = noise.sample(rng);
            *x = (*x as f64 + n).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16;
        }
    }
    Ok(Phantom { volume: v, truths })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorStubConfig {
    /// Probability that a nodule yields a candidate.
    pub recall: f64,
    /// Mask radius is the nodule radius plus a margin drawn from this range.
    pub margin_mm: [f64; 2],
    pub tp_prob: [f64; 2],
    /// False candidates per scan, seeded on vessel and wall surfaces.
    pub fp_per_scan: usize,
    pub fp_radius_mm: [f64; 2],
    pub fp_prob: [f64; 2],
    /// Fragments keep this distance from every nodule surface.
    pub fp_clearance_mm: f64,
}

impl Default for DetectorStubConfig {
    fn default() -> Self {
        Self {
            recall: 0.9,
            margin_mm: [-0.5, 1.0],
            tp_prob: [0.5, 1.0],
            fp_per_scan: 6,
            fp_radius_mm: [1.5, 4.0],
            fp_prob: [0.1, 0.9],
            fp_clearance_mm: 2.0,
        }
    }
}

impl DetectorStubConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.recall) {
            return Err(Error::InvalidConfig("recall must be in [0, 1]".into()));
        }
        check_range("margin", self.margin_mm, false)?;
        check_range("fp radius", self.fp_radius_mm, true)?;
        for (name, r) in [("tp_prob", self.tp_prob), ("fp_prob", self.fp_prob)] {
            check_range(name, r, false)?;
            if r[0] < 0.0 || r[1] > 1.0 {
                return Err(Error::InvalidConfig(format!("{name} must lie in [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Sphere mask around `center`; falls back to the voxel containing the
/// centre when the radius is too small to cover any voxel centre.
pub fn sphere_voxels(v: &Volume, center: [f64; 3], radius: f64) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    let r2 = radius * radius;
    if radius > 0.0 {
        for_voxels_near(v, center, radius, |ijk, p| {
            if dist2(p, center) <= r2 {
                out.push(ijk);
            }
        });
    }
    if out.is_empty() {
        let s = v.spacing();
        let d = v.dims();
        out.push([0, 1, 2].map(|a| ((center[a] / s[a]).floor().max(0.0) as usize).min(d[a] - 1)));
    }
    out
}

/// Simulated detector output for one scan.
///
/// Each nodule is found with probability `recall`; its mask is the nodule
/// sphere grown or shrunk by a random margin. False candidates are balls
/// around random surface voxels of in-band structures (vessels, wall),
/// intersected with those structures grown by a margin from the same range,
/// and kept clear of the nodules. A voxel is within `margin` of a structure
/// when some in-band voxel centre lies within `margin + s/2` of its centre,
/// i.e. distances are taken to the structure's voxel faces.
pub fn detector_stub<R: Rng + ?Sized>(
    scan_id: &str,
    v: &Volume,
    truths: &[TruthNodule],
    cfg: &DetectorStubConfig,
    rng: &mut R,
) -> Result<Vec<Candidate>> {
    cfg.validate()?;
    let mut out = Vec::new();
    let mut next_id = 0usize;
    let mut id = || {
        next_id += 1;
        format!("{scan_id}_c{:03}", next_id - 1)
    };
    for t in truths {
        if !rng.random_bool(cfg.recall) {
            continue;
        }
        let margin = uniform(rng, cfg.margin_mm);
        let p = uniform(rng, cfg.tp_prob);
        let voxels = sphere_voxels(v, t.center_mm, 0.5 * t.diameter_mm + margin);
        out.push(Candidate::from_voxels(id(), v.dims(), v.spacing(), voxels, p)?);
    }

    let (lo, hi) = DEFAULT_HU_BAND;
    let in_band = |x: i16| (x as f64) >= lo && (x as f64) <= hi;
    let near_truth = |p: [f64; 3]| {
        truths.iter().any(|t| {
            let r = 0.5 * t.diameter_mm + cfg.fp_clearance_mm;
            dist2(p, t.center_mm) <= r * r
        })
    };
    let dims = v.dims();
    let mut surface = Vec::new();
    for k in 0..dims[2] {
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                if !in_band(v.get(i, j, k)) {
                    continue;
                }
                let ijk = [i, j, k];
                let exposed = (0..3).any(|a| {
                    let mut lo_n = ijk;
                    let mut hi_n = ijk;
                    let below = ijk[a] > 0 && {
                        lo_n[a] -= 1;
                        !in_band(v.get(lo_n[0], lo_n[1], lo_n[2]))
                    };
                    let above = ijk[a] + 1 < dims[a] && {
                        hi_n[a] += 1;
                        !in_band(v.get(hi_n[0], hi_n[1], hi_n[2]))
                    };
                    below || above
                });
                if exposed && !near_truth(v.voxel_center_mm(ijk)) {
                    surface.push(ijk);
                }
            }
        }
    }
    if surface.is_empty() {
        return Ok(out);
    }
    for _ in 0..cfg.fp_per_scan {
        let seed = surface[rng.random_range(0..surface.len())];
        let c = v.voxel_center_mm(seed);
        let radius = uniform(rng, cfg.fp_radius_mm);
        let margin = uniform(rng, cfg.margin_mm);
        let p = uniform(rng, cfg.fp_prob);
        let r2 = radius * radius;
        let reach = margin + 0.5 * v.spacing().iter().cloned().fold(f64::INFINITY, f64::min);
        let mut voxels = Vec::new();
        for_voxels_near(v, c, radius, |[i, j, k], q| {
            if dist2(q, c) > r2 || near_truth(q) {
                return;
            }
            let keep = in_band(v.get(i, j, k)) || (reach > 0.0 && {
                let mut found = false;
                for_voxels_near(v, q, reach, |[a, b, d], n| {
                    found = found || (dist2(n, q) <= reach * reach && in_band(v.get(a, b, d)));
                });
                found
            });
            if keep {
                voxels.push([i, j, k]);
            }
        });
        out.push(Candidate::from_voxels(id(), dims, v.spacing(), voxels, p)?);
    }
    Ok(out)
}

/// One generated scan with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Scan {
    pub id: String,
    pub volume: Volume,
    pub truths: Vec<TruthNodule>,
}

impl Scan {
    pub fn eval_truths(&self) -> Vec<Truth> {
        self.truths.iter().map(|t| t.to_truth(&self.id)).collect()
    }
}

/// Scan `i` of a series: phantom seeded by `seed ^ i`, id `scan_{i:03}`.
pub fn gen_scan(cfg: &PhantomConfig, index: usize) -> Result<Scan> {
    let mut rng = derived(cfg.seed, index);
    let ph = gen_phantom(cfg, &mut rng)?;
    Ok(Scan {
        id: format!("scan_{index:03}"),
        volume: ph.volume,
        truths: ph.truths,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub folds: usize,
    pub train_fraction: f64,
    pub stub: DetectorStubConfig,
    pub matching: MatchConfig,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            folds: 4,
            train_fraction: 0.75,
            stub: DetectorStubConfig::default(),
            matching: MatchConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetCandidate {
    pub scan_id: String,
    pub candidate: Candidate,
    /// Inference fold for train candidates, `None` for test candidates.
    pub fold: Option<usize>,
    pub outcome: Outcome,
}

impl DatasetCandidate {
    pub fn label(&self) -> u8 {
        self.outcome.label()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FprDataset {
    pub train: Vec<DatasetCandidate>,
    pub test: Vec<DatasetCandidate>,
    pub train_scans: Vec<String>,
    pub test_scans: Vec<String>,
    pub fold_of: BTreeMap<String, usize>,
}

fn label_scan(scan: &Scan, cands: Vec<Candidate>, fold: Option<usize>, cfg: &MatchConfig) -> Vec<DatasetCandidate> {
    let scored: Vec<ScoredCandidate> = cands
        .iter()
        .map(|c| ScoredCandidate {
            scan_id: scan.id.clone(),
            center_mm: c.center_mm(),
            score: c.p(),
            matched_truth: None,
        })
        .collect();
    let labeled = match_candidates(&scored, &scan.eval_truths(), cfg);
    cands
        .into_iter()
        .zip(labeled)
        .map(|(candidate, l)| DatasetCandidate {
            scan_id: scan.id.clone(),
            candidate,
            fold,
            outcome: l.outcome,
        })
        .collect()
}

/// Split scans 75/25, assign train scans to folds and run the detector
/// stub on each held-out fold and on the test split.
///
/// The stub is not trained, so the folds only determine which inference
/// round a candidate comes from; every scan is processed exactly once. The
/// stub for the scan at position `i` of `scans` uses the seed `seed ^ i`.
pub fn build_fpr_dataset(scans: &[Scan], cfg: &DatasetConfig) -> Result<FprDataset> {
    cfg.stub.validate()?;
    if cfg.folds == 0 || !(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0) {
        return Err(Error::InvalidConfig("folds >= 1 and 0 < train_fraction < 1 required".into()));
    }
    let mut order: Vec<usize> = (0..scans.len()).collect();
    order.shuffle(&mut seeded(cfg.seed));
    let n_train = (scans.len() as f64 * cfg.train_fraction).round() as usize;
    if n_train < cfg.folds || n_train >= scans.len() {
        return Err(Error::TooFewScans {
            needed: cfg.folds + 1,
            got: scans.len(),
        });
    }
    let (train_idx, test_idx) = order.split_at(n_train);
    let mut fold_of = BTreeMap::new();
    for (pos, &i) in train_idx.iter().enumerate() {
        fold_of.insert(scans[i].id.clone(), pos % cfg.folds);
    }
    let stub = |i: usize| {
        let s = &scans[i];
        detector_stub(&s.id, &s.volume, &s.truths, &cfg.stub, &mut derived(cfg.seed, i))
    };
    let mut train = Vec::new();
    for fold in 0..cfg.folds {
        for (pos, &i) in train_idx.iter().enumerate() {
            if pos % cfg.folds == fold {
                train.extend(label_scan(&scans[i], stub(i)?, Some(fold), &cfg.matching));
            }
        }
    }
    let mut test = Vec::new();
    for &i in test_idx {
        test.extend(label_scan(&scans[i], stub(i)?, None, &cfg.matching));
    }
    Ok(FprDataset {
        train,
        test,
        train_scans: train_idx.iter().map(|&i| scans[i].id.clone()).collect(),
        test_scans: test_idx.iter().map(|&i| scans[i].id.clone()).collect(),
        fold_of,
    })
}
