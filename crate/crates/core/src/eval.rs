//! Candidate-to-truth matching and FROC scoring.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// False-positive rates (per scan) at which sensitivity is reported.
pub const FP_LEVELS: [f64; 7] = [0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0];

/// A ground-truth nodule as seen by the scorer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub id: String,
    pub scan_id: String,
    pub center_mm: [f64; 3],
    pub diameter_mm: f64,
}

impl Truth {
    pub fn radius_mm(&self) -> f64 {
        0.5 * self.diameter_mm
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub scan_id: String,
    pub center_mm: [f64; 3],
    pub score: f64,
    pub matched_truth: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    /// Truths with diameter at or below this are not nodules; hits on them
    /// count as false positives.
    pub negative_max_diameter_mm: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            negative_max_diameter_mm: 3.0,
        }
    }
}

impl MatchConfig {
    pub fn is_positive(&self, t: &Truth) -> bool {
        t.diameter_mm > self.negative_max_diameter_mm
    }

    pub fn count_positive(&self, truths: &[Truth]) -> usize {
        truths.iter().filter(|t| self.is_positive(t)).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    /// First (highest-scoring) hit on a nodule.
    TruePositive { truth: String },
    /// Later hit on an already claimed nodule: neither TP nor FP.
    Duplicate { truth: String },
    FalsePositive,
}

impl Outcome {
    /// Training label: any hit on a nodule is positive.
    pub fn label(&self) -> u8 {
        match self {
            Outcome::FalsePositive => 0,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledCandidate {
    pub scan_id: String,
    pub score: f64,
    pub outcome: Outcome,
}

fn dist2(a: [f64; 3], b: [f64; 3]) -> f64 {
    (0..3).map(|i| (a[i] - b[i]).powi(2)).sum()
}

/// Label candidates against truths; the output is in input order.
///
/// Candidates are visited by descending score (ties by input order). A
/// candidate within `r_t` of an unclaimed nodule claims the nearest one.
pub fn match_candidates(
    cands: &[ScoredCandidate],
    truths: &[Truth],
    cfg: &MatchConfig,
) -> Vec<LabeledCandidate> {
    let mut order: Vec<usize> = (0..cands.len()).collect();
    order.sort_by(|&a, &b| cands[b].score.total_cmp(&cands[a].score).then(a.cmp(&b)));
    let mut claimed = vec![false; truths.len()];
    let mut out: Vec<Option<LabeledCandidate>> = vec![None; cands.len()];
    for i in order {
        let c = &cands[i];
        let mut best: Option<(f64, usize)> = None;
        let mut hit_claimed: Option<usize> = None;
        for (t_idx, t) in truths.iter().enumerate() {
            if t.scan_id != c.scan_id || !cfg.is_positive(t) {
                continue;
            }
            let d2 = dist2(c.center_mm, t.center_mm);
            if d2 > t.radius_mm() * t.radius_mm() {
                continue;
            }
            if claimed[t_idx] {
                hit_claimed.get_or_insert(t_idx);
            } else if best.is_none_or(|(bd, _)| d2 < bd) {
                best = Some((d2, t_idx));
            }
        }
        let outcome = match (best, hit_claimed) {
            (Some((_, t)), _) => {
                claimed[t] = true;
                Outcome::TruePositive {
                    truth: truths[t].id.clone(),
                }
            }
            (None, Some(t)) => Outcome::Duplicate {
                truth: truths[t].id.clone(),
            },
            (None, None) => Outcome::FalsePositive,
        };
        out[i] = Some(LabeledCandidate {
            scan_id: c.scan_id.clone(),
            score: c.score,
            outcome,
        });
    }
    out.into_iter().map(|o| o.expect("every index visited")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrocPoint {
    pub threshold: f64,
    pub fp_per_scan: f64,
    pub sensitivity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrocReport {
    pub n_scans: usize,
    pub n_truths: usize,
    pub curve: Vec<FrocPoint>,
    pub fp_levels: [f64; 7],
    pub sens_at: [f64; 7],
    pub mean_sens: f64,
}

/// Sweep every distinct score as a threshold (keep `score >= t`).
///
/// `n_truths` counts every nodule, including ones no candidate reached.
pub fn froc(labeled: &[LabeledCandidate], n_scans: usize, n_truths: usize) -> Result<FrocReport> {
    if n_truths == 0 {
        return Err(Error::NoTruths);
    }
    if n_scans == 0 {
        return Err(Error::InvalidConfig("n_scans must be at least 1".into()));
    }
    if let Some(c) = labeled.iter().find(|c| !c.score.is_finite()) {
        return Err(Error::InvalidConfig(format!("non-finite score {}", c.score)));
    }
    let mut order: Vec<&LabeledCandidate> = labeled.iter().collect();
    order.sort_by(|a, b| b.score.total_cmp(&a.score));
    let mut curve = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    for (i, c) in order.iter().enumerate() {
        match c.outcome {
            Outcome::TruePositive { .. } => tp += 1,
            Outcome::FalsePositive => fp += 1,
            Outcome::Duplicate { .. } => {}
        }
        let last_of_group = order.get(i + 1).is_none_or(|n| n.score != c.score);
        if last_of_group {
            curve.push(FrocPoint {
                threshold: c.score,
                fp_per_scan: fp as f64 / n_scans as f64,
                sensitivity: tp as f64 / n_truths as f64,
            });
        }
    }
    let sens_at = FP_LEVELS.map(|l| sensitivity_at(&curve, l));
    let mean_sens = sens_at.iter().sum::<f64>() / FP_LEVELS.len() as f64;
    Ok(FrocReport {
        n_scans,
        n_truths,
        curve,
        fp_levels: FP_LEVELS,
        sens_at,
        mean_sens,
    })
}

/// Linear interpolation along a curve sorted by FP rate; zero below the
/// first point, flat beyond the last.
pub fn sensitivity_at(curve: &[FrocPoint], level: f64) -> f64 {
    let split = curve.partition_point(|p| p.fp_per_scan <= level);
    if split == 0 {
        return 0.0;
    }
    let left = curve[split - 1];
    match curve.get(split) {
        None => left.sensitivity,
        Some(right) => {
            let t = (level - left.fp_per_scan) / (right.fp_per_scan - left.fp_per_scan);
            left.sensitivity + t * (right.sensitivity - left.sensitivity)
        }
    }
}

impl FrocReport {
    /// Seven sensitivities and their mean, e.g.
    /// `0.545 0.679 0.842 0.971 0.990 0.995 0.995 | 0.859`.
    pub fn table_row(&self) -> String {
        let cols: Vec<String> = self.sens_at.iter().map(|s| format!("{s:.3}")).collect();
        format!("{} | {:.3}", cols.join(" "), self.mean_sens)
    }

    pub fn table_header() -> &'static str {
        "0.125 0.25  0.5   1     2     4     8     | mean"
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("0.125,0.25,0.5,1,2,4,8,mean\n");
        let vals: Vec<String> = self.sens_at.iter().map(|v| v.to_string()).collect();
        s.push_str(&vals.join(","));
        s.push(',');
        s.push_str(&self.mean_sens.to_string());
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn truth(id: &str, scan: &str, c: [f64; 3], d: f64) -> Truth {
        Truth {
            id: id.into(),
            scan_id: scan.into(),
            center_mm: c,
            diameter_mm: d,
        }
    }

    fn cand(scan: &str, c: [f64; 3], score: f64) -> ScoredCandidate {
        ScoredCandidate {
            scan_id: scan.into(),
            center_mm: c,
            score,
            matched_truth: None,
        }
    }

    fn lab(score: f64, outcome: Outcome) -> LabeledCandidate {
        LabeledCandidate {
            scan_id: "s".into(),
            score,
            outcome,
        }
    }

    fn tp(id: &str) -> Outcome {
        Outcome::TruePositive { truth: id.into() }
    }

    #[test]
    fn hit_rules() {
        let truths = [truth("t", "a", [10.0, 10.0, 10.0], 6.0)];
        let cfg = MatchConfig::default();
        let l = match_candidates(&[cand("a", [10.0, 10.0, 10.0], 0.5)], &truths, &cfg);
        assert_eq!(l[0].outcome, tp("t"));
        let l = match_candidates(&[cand("a", [13.0, 10.0, 10.0], 0.5)], &truths, &cfg);
        assert_eq!(l[0].outcome, tp("t"));
        let l = match_candidates(&[cand("a", [13.0 + 1e-9, 10.0, 10.0], 0.5)], &truths, &cfg);
        assert_eq!(l[0].outcome, Outcome::FalsePositive);
        let l = match_candidates(&[cand("b", [10.0, 10.0, 10.0], 0.5)], &truths, &cfg);
        assert_eq!(l[0].outcome, Outcome::FalsePositive);
    }

    #[test]
    fn claim_once() {
        let truths = [truth("t", "a", [0.0; 3], 8.0)];
        let cs = [cand("a", [1.0, 0.0, 0.0], 0.4), cand("a", [0.0; 3], 0.9)];
        let l = match_candidates(&cs, &truths, &MatchConfig::default());
        assert_eq!(l[1].outcome, tp("t"));
        assert_eq!(l[0].outcome, Outcome::Duplicate { truth: "t".into() });
        let r = froc(&l, 1, 1).unwrap();
        assert_eq!(r.curve.last().unwrap().fp_per_scan, 0.0);
        assert_eq!(r.mean_sens, 1.0);
    }

    #[test]
    fn small_truths_are_negative() {
        let truths = [truth("small", "a", [0.0; 3], 3.0)];
        let cfg = MatchConfig::default();
        let l = match_candidates(&[cand("a", [0.0; 3], 0.9)], &truths, &cfg);
        assert_eq!(l[0].outcome, Outcome::FalsePositive);
        assert_eq!(cfg.count_positive(&truths), 0);
    }

    #[test]
    fn perfect_single_hit() {
        let r = froc(&[lab(0.9, tp("t"))], 1, 1).unwrap();
        assert_eq!(r.sens_at, [1.0; 7]);
        assert_eq!(r.mean_sens, 1.0);
        assert_eq!(r.table_row(), "1.000 1.000 1.000 1.000 1.000 1.000 1.000 | 1.000");
    }

    #[test]
    fn two_scan_example() {
        let l = [
            lab(0.9, tp("a")),
            lab(0.8, Outcome::FalsePositive),
            lab(0.7, tp("b")),
        ];
        let r = froc(&l, 2, 2).unwrap();
        let pts: Vec<(f64, f64)> = r.curve.iter().map(|p| (p.fp_per_scan, p.sensitivity)).collect();
        assert_eq!(pts, vec![(0.0, 0.5), (0.5, 0.5), (0.5, 1.0)]);
        assert_eq!(r.sens_at, [0.5, 0.5, 1.0, 1.0, 1.0, 1.0, 1.0]);
        assert!((r.mean_sens - 6.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn interpolation_and_floor() {
        // A first FP above every hit: nothing below 1 FP/scan. The tied pair
        // at 0.3 moves the curve diagonally from (2, 0.5) to (3, 1.0).
        let l = [
            lab(0.9, Outcome::FalsePositive),
            lab(0.5, tp("a")),
            lab(0.4, Outcome::FalsePositive),
            lab(0.3, Outcome::FalsePositive),
            lab(0.3, tp("b")),
        ];
        let r = froc(&l, 1, 2).unwrap();
        assert_eq!(r.sens_at[0], 0.0);
        assert_eq!(r.sens_at[3], 0.5);
        assert_eq!(r.sens_at[4], 0.5);
        assert_eq!(r.sens_at[5], 1.0);
        let mid = sensitivity_at(&r.curve, 2.5);
        assert!((mid - 0.75).abs() < 1e-15);
    }

    #[test]
    fn empty_and_error_cases() {
        let r = froc(&[], 3, 2).unwrap();
        assert_eq!(r.mean_sens, 0.0);
        assert!(matches!(froc(&[], 1, 0), Err(Error::NoTruths)));
        assert!(froc(&[], 0, 1).is_err());
    }

    #[test]
    fn csv_layout() {
        let r = froc(&[lab(0.9, tp("t"))], 1, 2).unwrap();
        assert_eq!(r.to_csv(), "0.125,0.25,0.5,1,2,4,8,mean\n0.5,0.5,0.5,0.5,0.5,0.5,0.5,0.5\n");
    }
}
