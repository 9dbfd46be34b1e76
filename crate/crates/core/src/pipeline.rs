//! End-to-end pipeline: in-memory building blocks plus the file-level
//! commands behind the CLI.
//!
//! Directory layout produced by [`cmd_gen`] and [`cmd_dataset`]:
//!
//! ```text
//! data/
//!   manifest.json            scan index
//!   scans/<scan>/volume.nvol
//!   scans/<scan>/truths.json
//!   masks/<candidate>.nvol   detector masks
//!   train.jsonl, test.jsonl  candidate manifests
//!   train_truths.json, test_truths.json
//!   split.json
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::augment::{augment_volume, AugmentConfig};
use crate::cloud::{extract_points, roi_bbox, Candidate, PointCloud};
use crate::config::{CloudConfig, PipelineConfig};
use crate::error::{Error, Result};
use crate::eval::{froc, match_candidates, FrocReport, LabeledCandidate, MatchConfig, Outcome, ScoredCandidate, Truth};
use crate::formats::{cloud_to_ply, read_manifest, read_npcd, write_manifest, write_npcd, CandidateRecord};
use crate::model::{evaluate, load_weights, log_to_csv, save_weights, train, TrainConfig, TrainOutcome, TrainSample, ValidationSet};
use crate::nvol::{self, write_atomic};
use crate::phantom::{build_fpr_dataset, gen_scan, DatasetCandidate, PhantomConfig, Scan, TruthNodule};
use crate::rng::derived;
use crate::sampling::{sample_with_mode, SampleStats, SamplerConfig, SamplerMode};
use crate::volume::{Mask, Volume};

/// Map `f` over `items` on up to `jobs` scoped threads; output order matches
/// input order regardless of `jobs`.
pub fn par_map<T: Sync, U: Send>(items: &[T], jobs: usize, f: impl Fn(usize, &T) -> U + Sync) -> Vec<U> {
    let jobs = jobs.max(1).min(items.len().max(1));
    if jobs == 1 {
        return items.iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let chunk = items.len().div_ceil(jobs);
    let f = &f;
    std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .enumerate()
            .map(|(c, part)| {
                s.spawn(move || {
                    part.iter()
                        .enumerate()
                        .map(|(i, t)| f(c * chunk + i, t))
                        .collect::<Vec<U>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}

/// Full ROI cloud of a candidate.
pub fn candidate_cloud(v: &Volume, c: &Candidate, cfg: &CloudConfig) -> Result<PointCloud> {
    let b = roi_bbox(c, cfg.padding_mm)?;
    extract_points(v, c, &b, cfg.hu_band[0], cfg.hu_band[1])
}

/// ROI cloud reduced to `sampler.m` points.
pub fn sampled_cloud<R: Rng + ?Sized>(
    v: &Volume,
    c: &Candidate,
    cloud: &CloudConfig,
    mode: SamplerMode,
    sampler: &SamplerConfig,
    rng: &mut R,
) -> Result<(PointCloud, SampleStats)> {
    let full = candidate_cloud(v, c, cloud)?;
    sample_with_mode(&full, mode, sampler, rng)
}

/// Sampled clouds for one split, ready for training or scoring.
#[derive(Debug, Clone)]
pub struct PreparedSplit {
    pub clouds: Vec<PointCloud>,
    pub labels: Vec<u8>,
    pub candidates: Vec<ScoredCandidate>,
    pub truths: Vec<Truth>,
    pub n_scans: usize,
}

impl PreparedSplit {
    pub fn train_samples(&self) -> Vec<TrainSample> {
        self.clouds
            .iter()
            .zip(&self.labels)
            .map(|(c, &label)| TrainSample { cloud: c.clone(), label })
            .collect()
    }

    pub fn validation(&self, matching: MatchConfig) -> ValidationSet {
        ValidationSet {
            clouds: self.clouds.clone(),
            candidates: self.candidates.clone(),
            labels: self.labels.clone(),
            truths: self.truths.clone(),
            n_scans: self.n_scans,
            match_cfg: matching,
        }
    }
}

/// Sample every candidate of a split. Candidate `i` uses the seed
/// `sampler.seed ^ i`.
pub fn prepare_split(
    scans: &[Scan],
    scan_ids: &[String],
    cands: &[DatasetCandidate],
    cloud: &CloudConfig,
    mode: SamplerMode,
    sampler: &SamplerConfig,
    jobs: usize,
) -> Result<PreparedSplit> {
    let by_id: BTreeMap<&str, &Scan> = scans.iter().map(|s| (s.id.as_str(), s)).collect();
    let lookup = |id: &str| {
        by_id
            .get(id)
            .copied()
            .ok_or_else(|| Error::InvalidConfig(format!("unknown scan {id}")))
    };
    let sampled = par_map(cands, jobs, |i, dc| {
        let scan = lookup(&dc.scan_id)?;
        sampled_cloud(&scan.volume, &dc.candidate, cloud, mode, sampler, &mut derived(sampler.seed, i))
    });
    let mut clouds = Vec::with_capacity(cands.len());
    for s in sampled {
        clouds.push(s?.0);
    }
    let mut truths = Vec::new();
    for id in scan_ids {
        truths.extend(lookup(id)?.eval_truths());
    }
    Ok(PreparedSplit {
        clouds,
        labels: cands.iter().map(|c| c.label()).collect(),
        candidates: cands
            .iter()
            .map(|c| ScoredCandidate {
                scan_id: c.scan_id.clone(),
                center_mm: c.candidate.center_mm(),
                score: c.candidate.p(),
                matched_truth: None,
            })
            .collect(),
        truths,
        n_scans: scan_ids.len(),
    })
}

/// Train on one prepared split and report FROC on another.
pub fn train_and_score(
    train_split: &PreparedSplit,
    test_split: &PreparedSplit,
    train_cfg: &TrainConfig,
    augment: &AugmentConfig,
    matching: MatchConfig,
) -> Result<(TrainOutcome, FrocReport)> {
    let out = train(&train_split.train_samples(), None, train_cfg, augment)?;
    let ev = evaluate(&out.weights, &test_split.validation(matching))?;
    Ok((out, ev.report))
}

// ---------------------------------------------------------------------------
// File-level commands

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Malformed {
        kind: "json",
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

fn rel(path: &Path) -> String {
    path.to_string_lossy().replace('\\', "/")
}

/// One failed item of a batch command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub item: String,
    pub kind: String,
    pub message: String,
}

impl Failure {
    fn new(item: impl Into<String>, e: &Error) -> Self {
        Self {
            item: item.into(),
            kind: e.kind().to_string(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub processed: usize,
    pub failed: Vec<Failure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanEntry {
    pub id: String,
    pub volume: String,
    pub truths: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub phantom: PhantomConfig,
    pub scans: Vec<ScanEntry>,
}

/// Truths of one split together with the scans they were drawn from, so a
/// scan without nodules still counts towards FPs per scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSet {
    pub scans: Vec<String>,
    pub truths: Vec<Truth>,
}

impl TruthSet {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        read_json(path.as_ref())
    }
}

/// Generate `n_scans` phantoms into `dir`.
pub fn cmd_gen(dir: &Path, n_scans: usize, cfg: &PipelineConfig) -> Result<DatasetIndex> {
    let cfg = cfg.resolved();
    cfg.phantom.validate()?;
    let idx: Vec<usize> = (0..n_scans).collect();
    let results = par_map(&idx, cfg.jobs, |_, &i| -> Result<ScanEntry> {
        let scan = gen_scan(&cfg.phantom, i)?;
        let vol = PathBuf::from("scans").join(&scan.id).join("volume.nvol");
        let tru = PathBuf::from("scans").join(&scan.id).join("truths.json");
        nvol::write(dir.join(&vol), &scan.volume)?;
        write_json(&dir.join(&tru), &scan.truths)?;
        Ok(ScanEntry {
            id: scan.id,
            volume: rel(&vol),
            truths: rel(&tru),
        })
    });
    let index = DatasetIndex {
        phantom: cfg.phantom.clone(),
        scans: results.into_iter().collect::<Result<_>>()?,
    };
    write_json(&dir.join("manifest.json"), &index)?;
    Ok(index)
}

pub fn load_index(dir: &Path) -> Result<DatasetIndex> {
    read_json(&dir.join("manifest.json"))
}

fn load_scan(dir: &Path, e: &ScanEntry) -> Result<Scan> {
    Ok(Scan {
        id: e.id.clone(),
        volume: nvol::read(dir.join(&e.volume))?,
        truths: read_json::<Vec<TruthNodule>>(&dir.join(&e.truths))?,
    })
}

pub fn load_scans(dir: &Path) -> Result<Vec<Scan>> {
    load_index(dir)?.scans.iter().map(|e| load_scan(dir, e)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitInfo {
    pub train_scans: Vec<String>,
    pub test_scans: Vec<String>,
    pub fold_of: BTreeMap<String, usize>,
    pub train_candidates: usize,
    pub test_candidates: usize,
    pub train_positives: usize,
    pub test_positives: usize,
}

/// Run the detector stub over a generated directory and write labeled
/// candidate manifests.
pub fn cmd_dataset(dir: &Path, cfg: &PipelineConfig) -> Result<SplitInfo> {
    let cfg = cfg.resolved();
    let scans = load_scans(dir)?;
    let ds = build_fpr_dataset(&scans, &cfg.dataset)?;
    let write_split = |cands: &[DatasetCandidate], name: &str| -> Result<()> {
        let mut records = Vec::with_capacity(cands.len());
        for c in cands {
            let mask_rel = PathBuf::from("masks").join(format!("{}.nvol", c.candidate.id));
            nvol::write(dir.join(&mask_rel), &c.candidate.to_mask())?;
            records.push(CandidateRecord {
                id: c.candidate.id.clone(),
                scan_id: c.scan_id.clone(),
                mask_path: rel(&mask_rel),
                p: c.candidate.p(),
                label: Some(c.label()),
                fold: c.fold,
            });
        }
        write_manifest(dir.join(format!("{name}.jsonl")), &records)
    };
    write_split(&ds.train, "train")?;
    write_split(&ds.test, "test")?;
    let truth_set = |ids: &[String]| TruthSet {
        scans: ids.to_vec(),
        truths: scans
            .iter()
            .filter(|s| ids.contains(&s.id))
            .flat_map(|s| s.eval_truths())
            .collect(),
    };
    write_json(&dir.join("train_truths.json"), &truth_set(&ds.train_scans))?;
    write_json(&dir.join("test_truths.json"), &truth_set(&ds.test_scans))?;
    let info = SplitInfo {
        train_scans: ds.train_scans.clone(),
        test_scans: ds.test_scans.clone(),
        fold_of: ds.fold_of.clone(),
        train_candidates: ds.train.len(),
        test_candidates: ds.test.len(),
        train_positives: ds.train.iter().filter(|c| c.label() == 1).count(),
        test_positives: ds.test.iter().filter(|c| c.label() == 1).count(),
    };
    write_json(&dir.join("split.json"), &info)?;
    Ok(info)
}

/// Written next to every sampled cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudSidecar {
    pub id: String,
    pub scan_id: String,
    pub label: Option<u8>,
    pub center_mm: [f64; 3],
    pub r_mm: f64,
    pub p: f64,
    pub augmented: bool,
    pub stats: SampleStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudIndex {
    pub clouds: Vec<String>,
    pub summary: BatchSummary,
}

/// Sample one cloud per manifest record into `out`.
///
/// Record `i` uses the seed `seed ^ i`. With augmentation enabled, image-level
/// augmentation is applied to records that carry a training fold; test
/// records are never augmented. Failures are collected, not fatal.
pub fn cmd_sample(manifest: &Path, out: &Path, cfg: &PipelineConfig) -> Result<CloudIndex> {
    let cfg = cfg.resolved();
    cfg.sampling.validate()?;
    let root = manifest.parent().unwrap_or(Path::new("."));
    let records = read_manifest(manifest)?;
    let index = load_index(root)?;
    let entries: BTreeMap<&str, &ScanEntry> = index.scans.iter().map(|e| (e.id.as_str(), e)).collect();
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        groups.entry(r.scan_id.as_str()).or_default().push(i);
    }
    let groups: Vec<(&str, Vec<usize>)> = groups.into_iter().collect();
    let sample_one = |i: usize, v: &Volume| -> Result<String> {
        let r = &records[i];
        let mask: Mask = nvol::read(root.join(&r.mask_path))?;
        let cand = Candidate::from_mask(r.id.clone(), &mask, r.p)?;
        let mut rng = derived(cfg.sampling.seed, i);
        let augmented = cfg.augment && r.fold.is_some();
        let aug_vol;
        let vol = if augmented {
            aug_vol = augment_volume(v, &cfg.augmentation, &mut rng)?;
            &aug_vol
        } else {
            v
        };
        let (pc, stats) = sampled_cloud(vol, &cand, &cfg.cloud, cfg.sampler, &cfg.sampling, &mut rng)?;
        write_npcd(out.join(format!("{}.npcd", r.id)), &pc)?;
        let side = CloudSidecar {
            id: r.id.clone(),
            scan_id: r.scan_id.clone(),
            label: r.label,
            center_mm: cand.center_mm(),
            r_mm: cand.r_mm(),
            p: r.p,
            augmented,
            stats,
        };
        write_json(&out.join(format!("{}.json", r.id)), &side)?;
        Ok(r.id.clone())
    };
    let results = par_map(&groups, cfg.jobs, |_, (scan_id, idx)| {
        let vol = entries
            .get(scan_id)
            .ok_or_else(|| Error::InvalidConfig(format!("scan {scan_id} not in manifest.json")))
            .and_then(|e| nvol::read::<i16>(root.join(&e.volume)));
        idx.iter()
            .map(|&i| match &vol {
                Ok(v) => (i, sample_one(i, v)),
                Err(e) => (i, Err(Error::InvalidConfig(format!("scan {scan_id}: {e}")))),
            })
            .collect::<Vec<_>>()
    });
    let mut by_record: Vec<Option<Result<String>>> = (0..records.len()).map(|_| None).collect();
    for (i, r) in results.into_iter().flatten() {
        by_record[i] = Some(r);
    }
    let mut clouds = Vec::new();
    let mut failed = Vec::new();
    for (i, r) in by_record.into_iter().enumerate() {
        match r.expect("every record handled") {
            Ok(id) => clouds.push(id),
            Err(e) => failed.push(Failure::new(&records[i].id, &e)),
        }
    }
    let idx = CloudIndex {
        summary: BatchSummary {
            processed: clouds.len(),
            failed,
        },
        clouds,
    };
    write_json(&out.join("index.json"), &idx)?;
    Ok(idx)
}

/// A sampled cloud loaded back with its sidecar.
#[derive(Debug, Clone)]
pub struct LoadedCloud {
    pub cloud: PointCloud,
    pub meta: CloudSidecar,
}

pub fn load_clouds(dir: &Path) -> Result<Vec<LoadedCloud>> {
    let idx: CloudIndex = read_json(&dir.join("index.json"))?;
    idx.clouds
        .iter()
        .map(|id| {
            let mut cloud = read_npcd(dir.join(format!("{id}.npcd")))?;
            let meta: CloudSidecar = read_json(&dir.join(format!("{id}.json")))?;
            cloud.r_mm = meta.r_mm;
            cloud.candidate_ref = meta.id.clone();
            Ok(LoadedCloud { cloud, meta })
        })
        .collect()
}

fn validation_set(clouds: &[LoadedCloud], truths: &TruthSet, matching: MatchConfig) -> ValidationSet {
    ValidationSet {
        clouds: clouds.iter().map(|c| c.cloud.clone()).collect(),
        candidates: clouds
            .iter()
            .map(|c| ScoredCandidate {
                scan_id: c.meta.scan_id.clone(),
                center_mm: c.meta.center_mm,
                score: c.meta.p,
                matched_truth: None,
            })
            .collect(),
        labels: clouds.iter().map(|c| c.meta.label.unwrap_or(0)).collect(),
        truths: truths.truths.clone(),
        n_scans: truths.scans.len(),
        match_cfg: matching,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub samples: usize,
    pub positives: usize,
    pub params: usize,
    pub best_epoch: usize,
    pub final_train_loss: f64,
}

/// Train on a sampled cloud directory; optionally select the epoch by FROC
/// on a validation cloud directory. Writes the weights and a CSV log
/// (`<weights>.log.csv`).
pub fn cmd_train(
    clouds: &Path,
    weights: &Path,
    validation: Option<(&Path, &Path)>,
    cfg: &PipelineConfig,
) -> Result<TrainSummary> {
    let cfg = cfg.resolved();
    let loaded = load_clouds(clouds)?;
    let mut samples = Vec::with_capacity(loaded.len());
    for c in loaded {
        let label = c.meta.label.ok_or_else(|| {
            Error::InvalidConfig(format!("cloud {} has no label", c.meta.id))
        })?;
        samples.push(TrainSample { cloud: c.cloud, label });
    }
    let val = match validation {
        Some((dir, truths)) => Some(validation_set(
            &load_clouds(dir)?,
            &TruthSet::load(truths)?,
            cfg.dataset.matching,
        )),
        None => None,
    };
    let out = train(&samples, val.as_ref(), &cfg.train, &cfg.augmentation)?;
    save_weights(weights, &out.weights)?;
    let mut log_path = weights.as_os_str().to_owned();
    log_path.push(".log.csv");
    write_atomic(Path::new(&log_path), log_to_csv(&out.log).as_bytes())?;
    Ok(TrainSummary {
        samples: samples.len(),
        positives: samples.iter().filter(|s| s.label == 1).count(),
        params: out.weights.param_count(),
        best_epoch: out.best_epoch,
        final_train_loss: out.log.last().map_or(f64::NAN, |e| e.train_loss),
    })
}

pub fn labeled_to_csv(labeled: &[LabeledCandidate], ids: &[String]) -> String {
    let mut s = String::from("candidate,scan_id,score,outcome,truth\n");
    for (l, id) in labeled.iter().zip(ids) {
        let (kind, truth) = match &l.outcome {
            Outcome::TruePositive { truth } => ("tp", truth.as_str()),
            Outcome::Duplicate { truth } => ("duplicate", truth.as_str()),
            Outcome::FalsePositive => ("fp", ""),
        };
        let _ = writeln!(s, "{id},{},{},{kind},{truth}", l.scan_id, l.score);
    }
    s
}

pub fn labeled_from_csv(text: &str, path: &Path) -> Result<Vec<LabeledCandidate>> {
    let bad = |line: usize, reason: &str| Error::Malformed {
        kind: "labeled-candidate csv",
        path: path.to_path_buf(),
        reason: format!("line {line}: {reason}"),
    };
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split(',').map(str::trim).collect();
    let col = |name: &str| header.iter().position(|h| *h == name);
    let (Some(cs), Some(cc), Some(co)) = (col("scan_id"), col("score"), col("outcome")) else {
        return Err(bad(1, "header needs scan_id, score and outcome"));
    };
    let ct = col("truth");
    let mut out = Vec::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        let get = |c: usize| cols.get(c).copied().ok_or_else(|| bad(i + 2, "missing column"));
        let score: f64 = get(cc)?.parse().map_err(|_| bad(i + 2, "bad score"))?;
        let truth = || ct.and_then(|c| cols.get(c)).unwrap_or(&"").to_string();
        let outcome = match get(co)? {
            "tp" => Outcome::TruePositive { truth: truth() },
            "duplicate" => Outcome::Duplicate { truth: truth() },
            "fp" => Outcome::FalsePositive,
            other => return Err(bad(i + 2, &format!("unknown outcome {other:?}"))),
        };
        out.push(LabeledCandidate {
            scan_id: get(cs)?.to_string(),
            score,
            outcome,
        });
    }
    Ok(out)
}

/// Score a sampled cloud directory, write `report.json`, `report.csv` and
/// `labeled.csv` into `out`.
pub fn cmd_eval(clouds: &Path, weights: &Path, truths: &Path, out: &Path, cfg: &PipelineConfig) -> Result<FrocReport> {
    let loaded = load_clouds(clouds)?;
    let w = load_weights(weights)?;
    let ts = TruthSet::load(truths)?;
    let val = validation_set(&loaded, &ts, cfg.dataset.matching);
    let ev = evaluate(&w, &val)?;
    let scored: Vec<ScoredCandidate> = val
        .candidates
        .iter()
        .zip(&ev.scores)
        .map(|(c, &s)| ScoredCandidate { score: s, ..c.clone() })
        .collect();
    let labeled = match_candidates(&scored, &ts.truths, &cfg.dataset.matching);
    let ids: Vec<String> = loaded.iter().map(|c| c.meta.id.clone()).collect();
    write_json(&out.join("report.json"), &ev.report)?;
    write_atomic(&out.join("report.csv"), ev.report.to_csv().as_bytes())?;
    write_atomic(&out.join("labeled.csv"), labeled_to_csv(&labeled, &ids).as_bytes())?;
    Ok(ev.report)
}

/// FROC from a labeled-candidate CSV. `n_scans` defaults to the number of
/// distinct scans in the file.
pub fn cmd_froc(labeled_csv: &Path, n_scans: Option<usize>, n_truths: usize) -> Result<FrocReport> {
    let text = std::fs::read_to_string(labeled_csv).map_err(|e| Error::io(labeled_csv, e))?;
    let labeled = labeled_from_csv(&text, labeled_csv)?;
    let n_scans = n_scans.unwrap_or_else(|| {
        labeled
            .iter()
            .map(|l| l.scan_id.as_str())
            .collect::<std::collections::BTreeSet<_>>()
            .len()
    });
    froc(&labeled, n_scans, n_truths)
}

/// Image-level augmentation of NVOL volumes; input `i` uses seed `seed ^ i`.
pub fn cmd_augment(inputs: &[PathBuf], out: &Path, cfg: &PipelineConfig) -> Result<BatchSummary> {
    let cfg = cfg.resolved();
    cfg.augmentation.validate()?;
    let results = par_map(inputs, cfg.jobs, |i, path| -> Result<()> {
        let v: Volume = nvol::read(path)?;
        let a = augment_volume(&v, &cfg.augmentation, &mut derived(cfg.augmentation.seed, i))?;
        let name = path.file_name().ok_or_else(|| Error::InvalidConfig("input has no file name".into()))?;
        nvol::write(out.join(name), &a)
    });
    Ok(collect_summary(inputs, results))
}

fn collect_summary(inputs: &[PathBuf], results: Vec<Result<()>>) -> BatchSummary {
    let mut failed = Vec::new();
    let mut processed = 0;
    for (p, r) in inputs.iter().zip(results) {
        match r {
            Ok(()) => processed += 1,
            Err(e) => failed.push(Failure::new(p.to_string_lossy(), &e)),
        }
    }
    BatchSummary { processed, failed }
}

/// Convert NPCD clouds to coloured ASCII PLY files.
pub fn cmd_export_ply(inputs: &[PathBuf], out: &Path, jobs: usize) -> Result<BatchSummary> {
    let results = par_map(inputs, jobs, |_, path| -> Result<()> {
        let pc = read_npcd(path)?;
        let stem = path.file_stem().ok_or_else(|| Error::InvalidConfig("input has no file name".into()))?;
        let mut name = stem.to_owned();
        name.push(".ply");
        write_atomic(&out.join(name), cloud_to_ply(&pc).as_bytes())
    });
    Ok(collect_summary(inputs, results))
}
