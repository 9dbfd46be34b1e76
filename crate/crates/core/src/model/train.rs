//! Mini-batch training with Adam and a step learning-rate schedule.

use serde::{Deserialize, Serialize};

use super::features::{select_features, FeatureSet};
use super::network::{accumulate_gradients, forward, loss, ArchConfig, ModelWeights};
use crate::augment::{augment_cloud, balanced_batches, AugmentConfig};
use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::eval::{froc, match_candidates, FrocReport, MatchConfig, ScoredCandidate, Truth};
use crate::rng::seeded;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr0: f64,
    pub epochs: usize,
    /// The learning rate is multiplied by `lr_gamma` every `lr_step_epochs`.
    pub lr_step_epochs: usize,
    pub lr_gamma: f64,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    pub feature_set: FeatureSet,
    pub use_edgeconv: bool,
    pub k_neighbors: usize,
    pub edge_widths: Vec<usize>,
    pub point_widths: Vec<usize>,
    pub head_widths: Vec<usize>,
    pub coord_scale_mm: f64,
    /// Apply cloud-level augmentation to every training sample.
    pub augment: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let arch = ArchConfig::default();
        Self {
            lr0: 0.001,
            epochs: 70,
            lr_step_epochs: 10,
            lr_gamma: 0.5,
            batch_size: 16,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            feature_set: FeatureSet::XyzHuP,
            use_edgeconv: false,
            k_neighbors: arch.k_neighbors,
            edge_widths: ArchConfig::dgcnn().edge_widths,
            point_widths: arch.point_widths,
            head_widths: arch.head_widths,
            coord_scale_mm: arch.coord_scale_mm,
            augment: false,
        }
    }
}

impl TrainConfig {
    pub fn arch(&self) -> ArchConfig {
        ArchConfig {
            edge_widths: if self.use_edgeconv {
                self.edge_widths.clone()
            } else {
                Vec::new()
            },
            point_widths: self.point_widths.clone(),
            head_widths: self.head_widths.clone(),
            k_neighbors: self.k_neighbors,
            coord_scale_mm: self.coord_scale_mm,
        }
    }

    /// `lr0 * gamma^floor(epoch / step)`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr0 * self.lr_gamma.powi((epoch / self.lr_step_epochs.max(1)) as i32)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return bad("lr0 must be positive");
        }
        if self.batch_size < 2 || self.batch_size % 2 != 0 {
            return bad("batch_size must be even and at least 2");
        }
        if self.use_edgeconv && self.edge_widths.is_empty() {
            return bad("edge_widths must not be empty with use_edgeconv");
        }
        self.arch().validate()
    }
}

/// Adam optimizer state over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    pub fn new(n: usize, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            beta1,
            beta2,
            eps,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainSample {
    pub cloud: PointCloud,
    pub label: u8,
}

/// Held-out candidates scored with the FROC protocol after each epoch.
#[derive(Debug, Clone)]
pub struct ValidationSet {
    pub clouds: Vec<PointCloud>,
    /// Same order as `clouds`; scores are overwritten with model output.
    pub candidates: Vec<ScoredCandidate>,
    pub labels: Vec<u8>,
    pub truths: Vec<Truth>,
    pub n_scans: usize,
    pub match_cfg: MatchConfig,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: FrocReport,
    pub mean_loss: f64,
    pub scores: Vec<f64>,
}

pub fn predict_scores(w: &ModelWeights, clouds: &[PointCloud]) -> Result<Vec<f64>> {
    clouds
        .iter()
        .map(|c| forward(&select_features(c, w.feature_set), w))
        .collect()
}

/// Score held-out clouds and compute the FROC report.
pub fn evaluate(w: &ModelWeights, val: &ValidationSet) -> Result<Evaluation> {
    let scores = predict_scores(w, &val.clouds)?;
    let cands: Vec<ScoredCandidate> = val
        .candidates
        .iter()
        .zip(&scores)
        .map(|(c, &s)| ScoredCandidate {
            score: s,
            ..c.clone()
        })
        .collect();
    let labeled = match_candidates(&cands, &val.truths, &val.match_cfg);
    let report = froc(
        &labeled,
        val.n_scans,
        val.match_cfg.count_positive(&val.truths),
    )?;
    let mean_loss = if scores.is_empty() {
        0.0
    } else {
        scores
            .iter()
            .zip(&val.labels)
            .map(|(&p, &y)| loss(p, y))
            .sum::<f64>()
            / scores.len() as f64
    };
    Ok(Evaluation {
        report,
        mean_loss,
        scores,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    /// `NaN` when no validation set is given.
    pub val_mean_sens: f64,
}

pub fn log_to_csv(log: &[EpochLog]) -> String {
    let mut s = String::from("epoch,lr,train_loss,val_mean_sens\n");
    for e in log {
        s.push_str(&format!(
            "{},{},{},{}\n",
            e.epoch, e.lr, e.train_loss, e.val_mean_sens
        ));
    }
    s
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub weights: ModelWeights,
    pub log: Vec<EpochLog>,
    /// Epoch whose weights were returned.
    pub best_epoch: usize,
}

/// Train from scratch. Batches are class-balanced; with a validation set the
/// weights of the epoch with the best mean sensitivity are returned (ties go
/// to lower validation loss), otherwise the final weights.
pub fn train(
    data: &[TrainSample],
    val: Option<&ValidationSet>,
    cfg: &TrainConfig,
    augment_cfg: &AugmentConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let labels: Vec<u8> = data.iter().map(|s| s.label).collect();
    let batches = balanced_batches(&labels, cfg.batch_size, seeded(cfg.seed ^ 0xBA7C))?;
    let mut aug_rng = seeded(cfg.seed ^ 0xA06);
    let mut weights = ModelWeights::init(cfg.feature_set, &cfg.arch(), &mut seeded(cfg.seed))?;
    let mut params = weights.flat();
    let mut adam = Adam::new(params.len(), cfg.beta1, cfg.beta2, cfg.eps);
    let per_epoch = data.len().div_ceil(cfg.batch_size).max(1);
    let mut batches = batches;
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, f64, usize, ModelWeights)> = None;

    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        for _ in 0..per_epoch {
            let idx = batches.next().expect("endless stream");
            let mut grads = weights.zeros_like();
            for &i in &idx {
                let sample = &data[i];
                let feats = if cfg.augment {
                    let aug = augment_cloud(&sample.cloud, augment_cfg, &mut aug_rng)?;
                    select_features(&aug, cfg.feature_set)
                } else {
                    select_features(&sample.cloud, cfg.feature_set)
                };
                epoch_loss += accumulate_gradients(&feats, sample.label, &weights, &mut grads)?;
            }
            seen += idx.len();
            let scale = 1.0 / idx.len() as f64;
            let g: Vec<f64> = grads.flat().into_iter().map(|v| v * scale).collect();
            adam.step(&mut params, &g, lr);
            weights.set_flat(&params)?;
        }
        let train_loss = epoch_loss / seen as f64;
        let val_mean_sens = match val {
            Some(v) => {
                let ev = evaluate(&weights, v)?;
                let better = best.as_ref().is_none_or(|(s, l, _, _)| {
                    ev.report.mean_sens > *s || (ev.report.mean_sens == *s && ev.mean_loss < *l)
                });
                if better {
                    best = Some((ev.report.mean_sens, ev.mean_loss, epoch, weights.clone()));
                }
                ev.report.mean_sens
            }
            None => f64::NAN,
        };
        log.push(EpochLog {
            epoch,
            lr,
            train_loss,
            val_mean_sens,
        });
    }
    let (weights, best_epoch) = match best {
        Some((_, _, e, w)) => (w, e),
        None => (weights, cfg.epochs - 1),
    };
    Ok(TrainOutcome {
        weights,
        log,
        best_epoch,
    })
}
