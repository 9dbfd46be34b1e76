//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use ndarray::Array2;
use pcfpr_core::eval::{LabeledCandidate, Outcome, ScoredCandidate, Truth};
use pcfpr_core::model::{backward, forward, loss, ArchConfig, ModelWeights};
use pcfpr_core::FeatureSet;
use rand::Rng;

pub const LEVELS: [f64; 7] = [0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0];

/// FROC by brute force: every distinct score is tried as a threshold and
/// TP/FP are recounted from scratch.
pub fn brute_froc(labeled: &[LabeledCandidate], n_scans: usize, n_truths: usize) -> (Vec<(f64, f64)>, [f64; 7], f64) {
    let mut thresholds: Vec<f64> = labeled.iter().map(|c| c.score).collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let curve: Vec<(f64, f64)> = thresholds
        .iter()
        .map(|&t| {
            let kept = labeled.iter().filter(|c| c.score >= t);
            let (mut tp, mut fp) = (0usize, 0usize);
            for c in kept {
                match c.outcome {
                    Outcome::TruePositive { .. } => tp += 1,
                    Outcome::FalsePositive => fp += 1,
                    Outcome::Duplicate { .. } => {}
                }
            }
            (fp as f64 / n_scans as f64, tp as f64 / n_truths as f64)
        })
        .collect();
    let sens = LEVELS.map(|l| {
        // Highest sensitivity reached without exceeding `l`.
        let left = curve
            .iter()
            .filter(|p| p.0 <= l)
            .max_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let Some(&(lf, ls)) = left else { return 0.0 };
        // Lowest point strictly beyond `l`.
        let right = curve
            .iter()
            .filter(|p| p.0 > l)
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        match right {
            None => ls,
            Some(&(rf, rs)) => ls + (l - lf) / (rf - lf) * (rs - ls),
        }
    });
    let mean = sens.iter().sum::<f64>() / 7.0;
    (curve, sens, mean)
}

/// Random candidates and truths over up to five scans, with tied scores.
pub fn random_froc_instance<R: Rng>(rng: &mut R) -> (Vec<ScoredCandidate>, Vec<Truth>, usize) {
    let n_scans = rng.random_range(1..=5);
    let mut truths = Vec::new();
    for s in 0..n_scans {
        for t in 0..rng.random_range(0..4) {
            truths.push(Truth {
                id: format!("s{s}t{t}"),
                scan_id: format!("s{s}"),
                center_mm: [rng.random_range(0.0..40.0), rng.random_range(0.0..40.0), 10.0],
                diameter_mm: rng.random_range(2.0..14.0),
            });
        }
    }
    let n_cands = rng.random_range(0..=20);
    let cands = (0..n_cands)
        .map(|_| {
            let s = rng.random_range(0..n_scans);
            let near = truths.iter().filter(|t| t.scan_id == format!("s{s}")).nth(rng.random_range(0..3));
            let center_mm = match near {
                Some(t) if rng.random_bool(0.7) => [
                    t.center_mm[0] + rng.random_range(-5.0..5.0),
                    t.center_mm[1] + rng.random_range(-3.0..3.0),
                    t.center_mm[2],
                ],
                _ => [rng.random_range(0.0..40.0), rng.random_range(0.0..40.0), 10.0],
            };
            ScoredCandidate {
                scan_id: format!("s{s}"),
                center_mm,
                score: rng.random_range(0..8) as f64 / 8.0,
                matched_truth: None,
            }
        })
        .collect();
    (cands, truths, n_scans)
}

/// Random `m x d` features; coordinates in mm, the rest in `[-1, 1]`.
pub fn random_features<R: Rng>(m: usize, fs: FeatureSet, rng: &mut R) -> Array2<f64> {
    let d = fs.input_dim();
    Array2::from_shape_fn((m, d), |(_, c)| {
        if fs.has_xyz() && c < 3 {
            rng.random_range(-20.0..20.0)
        } else {
            rng.random_range(-1.0..1.0)
        }
    })
}

pub fn small_arch(edge: bool) -> ArchConfig {
    ArchConfig {
        edge_widths: if edge { vec![6, 6] } else { Vec::new() },
        point_widths: vec![8, 8],
        head_widths: vec![4],
        k_neighbors: 4,
        coord_scale_mm: 16.0,
    }
}

fn loss_at(x: &Array2<f64>, label: u8, w: &ModelWeights) -> f64 {
    loss(forward(x, w).unwrap(), label)
}

#[derive(Debug, Default, Clone, Copy)]
pub struct GradCheck {
    pub checked: usize,
    /// Parameters whose loss is not smooth within the step (ReLU, max-pool
    /// or neighbour switches); central differences are meaningless there.
    pub skipped: usize,
    pub max_rel_err: f64,
}

/// Compare `backward` against central differences for every parameter.
pub fn grad_check(x: &Array2<f64>, label: u8, w: &ModelWeights, h: f64) -> GradCheck {
    let (_, g) = backward(x, label, w).unwrap();
    let analytic = g.flat();
    let base = w.flat();
    let f0 = loss_at(x, label, w);
    let mut probe = w.clone();
    let mut at = |i: usize, delta: f64| {
        let mut v = base.clone();
        v[i] += delta;
        probe.set_flat(&v).unwrap();
        loss_at(x, label, &probe)
    };
    let mut out = GradCheck::default();
    for (i, &a) in analytic.iter().enumerate() {
        let fp = at(i, h);
        let fm = at(i, -h);
        let right = (fp - f0) / h;
        let left = (f0 - fm) / h;
        let curvature_bound = 1e-3 * (1.0 + right.abs().max(left.abs()));
        if (right - left).abs() > curvature_bound {
            out.skipped += 1;
            continue;
        }
        let n = (fp - fm) / (2.0 * h);
        let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
        out.checked += 1;
        out.max_rel_err = out.max_rel_err.max(rel);
    }
    out
}
