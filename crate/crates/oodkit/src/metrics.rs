//! Detection metrics (AUROC, AUPR, FPR at a TPR target), the threshold
//! detector and classification-accuracy deltas.
//!
//! Conventions, pinned because they differ across benchmark codebases:
//!
//! * AUROC is the Mann-Whitney statistic with the 0.5-per-tie correction,
//!   computed with a single sort; it equals the O(n^2) pairwise count
//!   exactly because both routes form the same rational number.
//! * FPR@TPR uses the step-function convention with `>=` comparisons and no
//!   interpolation: the threshold is the largest tau with TPR(tau) >= target.
//! * AUPR treats ID as the positive class (an `aupr_out` flip is provided)
//!   and sums (R_k - R_{k-1}) * P_k over descending unique thresholds.

use crate::enhancers::{forward, EnhancerSpec};
use crate::error::{OodError, Result};
use crate::types::{ActivationSet, LinearHead, ScoreSet};

fn split_counts(s: &ScoreSet) -> Result<(usize, usize)> {
    let n_id = s.n_id();
    let n_ood = s.n_ood();
    if n_id == 0 {
        return Err(OodError::DegenerateSet("no ID samples"));
    }
    if n_ood == 0 {
        return Err(OodError::DegenerateSet("no OoD samples"));
    }
    Ok((n_id, n_ood))
}

/// Area under the ROC curve via rank sums with tie correction.
pub fn auroc(s: &ScoreSet) -> Result<f64> {
    let (n_id, n_ood) = split_counts(s)?;
    let scores = s.scores();
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&i, &j| scores[i].partial_cmp(&scores[j]).unwrap());

    // average 1-based rank over each tied group
    let mut rank_sum_id = 0.0f64;
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end + 1 < order.len() && scores[order[end + 1]] == scores[order[start]] {
            end += 1;
        }
        let avg_rank = (start + end) as f64 / 2.0 + 1.0;
        for &idx in &order[start..=end] {
            if s.is_id()[idx] {
                rank_sum_id += avg_rank;
            }
        }
        start = end + 1;
    }
    let u = rank_sum_id - (n_id * (n_id + 1)) as f64 / 2.0;
    Ok(u / (n_id as f64 * n_ood as f64))
}

/// FPR at the largest threshold tau with TPR(tau) >= `tpr_target`, where
/// TPR(tau) = P(s_ID >= tau). Step function, no interpolation.
pub fn fpr_at_tpr(s: &ScoreSet, tpr_target: f64) -> Result<f64> {
    if !(tpr_target > 0.0 && tpr_target <= 1.0) {
        return Err(OodError::BadParameter(format!(
            "tpr target must lie in (0, 1], got {tpr_target}"
        )));
    }
    let (n_id, n_ood) = split_counts(s)?;
    let mut id_scores: Vec<f64> = s
        .scores()
        .iter()
        .zip(s.is_id())
        .filter(|(_, &id)| id)
        .map(|(&v, _)| v)
        .collect();
    id_scores.sort_by(|a, b| b.partial_cmp(a).unwrap());

    // walking down the distinct ID scores, the count of samples >= tau is the
    // index just past the current tied block
    let mut tau = id_scores[n_id - 1];
    let mut i = 0;
    while i < n_id {
        let mut end = i;
        while end + 1 < n_id && id_scores[end + 1] == id_scores[i] {
            end += 1;
        }
        if (end + 1) as f64 / n_id as f64 >= tpr_target {
            tau = id_scores[i];
            break;
        }
        i = end + 1;
    }

    let fp = s
        .scores()
        .iter()
        .zip(s.is_id())
        .filter(|(&v, &id)| !id && v >= tau)
        .count();
    Ok(fp as f64 / n_ood as f64)
}

/// Area under the precision-recall curve with ID as the positive class.
pub fn aupr(s: &ScoreSet) -> Result<f64> {
    let (n_id, _) = split_counts(s)?;
    let mut order: Vec<usize> = (0..s.len()).collect();
    let scores = s.scores();
    order.sort_by(|&i, &j| scores[j].partial_cmp(&scores[i]).unwrap());

    let mut area = 0.0;
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut recall_prev = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end + 1 < order.len() && scores[order[end + 1]] == scores[order[start]] {
            end += 1;
        }
        for &idx in &order[start..=end] {
            if s.is_id()[idx] {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        let recall = tp as f64 / n_id as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        area += (recall - recall_prev) * precision;
        recall_prev = recall;
        start = end + 1;
    }
    Ok(area)
}

/// AUPR with the OoD side as the positive class.
pub fn aupr_out(s: &ScoreSet) -> Result<f64> {
    let flipped = ScoreSet::new(
        s.scores().iter().map(|v| -v).collect(),
        s.is_id().iter().map(|b| !b).collect(),
    )?;
    aupr(&flipped)
}

/// Binary detector verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Detection {
    In,
    Out,
}

/// The threshold detector: IN iff score >= tau.
pub fn detect(score: f64, tau: f64) -> Detection {
    if score >= tau {
        Detection::In
    } else {
        Detection::Out
    }
}

/// Top-1 accuracies of the plain and enhanced forward passes plus their
/// difference. Argmax ties break toward the lowest class index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccuracyDelta {
    pub acc_base: f64,
    pub acc_enhanced: f64,
    pub delta: f64,
}

fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in z.iter().enumerate().skip(1) {
        if v > z[best] {
            best = i;
        }
    }
    best
}

pub fn accuracy_delta(
    set: &ActivationSet,
    head: &LinearHead,
    enhancer: &EnhancerSpec,
) -> Result<AccuracyDelta> {
    let labels = set.labels().ok_or(OodError::MissingLabels)?;
    head.check_labels(set)?;
    let identity = EnhancerSpec::identity();
    let mut base_hits = 0usize;
    let mut enh_hits = 0usize;
    for (i, row) in set.rows().enumerate() {
        let want = labels[i] as usize;
        if argmax(&forward(row, head, &identity)?) == want {
            base_hits += 1;
        }
        if argmax(&forward(row, head, enhancer)?) == want {
            enh_hits += 1;
        }
    }
    let n = set.n_samples() as f64;
    let acc_base = base_hits as f64 / n;
    let acc_enhanced = enh_hits as f64 / n;
    Ok(AccuracyDelta {
        acc_base,
        acc_enhanced,
        delta: acc_enhanced - acc_base,
    })
}

/// Brute-force oracles for the three metrics. They recount everything per
/// threshold, deliberately sharing no code with the fast paths above, and are
/// exposed for the acceptance suite.
pub mod oracle {
    use super::*;

    /// O(n^2) pairwise AUROC: (#{s_ID > s_OoD} + 0.5 #ties) / (n_ID n_OoD).
    pub fn auroc_pairwise(s: &ScoreSet) -> Result<f64> {
        let (n_id, n_ood) = split_counts(s)?;
        let mut favorable = 0.0f64;
        for (i, (&si, &ii)) in s.scores().iter().zip(s.is_id()).enumerate() {
            if !ii {
                continue;
            }
            for (j, (&sj, &ij)) in s.scores().iter().zip(s.is_id()).enumerate() {
                if ij || i == j {
                    continue;
                }
                if si > sj {
                    favorable += 1.0;
                } else if si == sj {
                    favorable += 0.5;
                }
            }
        }
        Ok(favorable / (n_id as f64 * n_ood as f64))
    }

    /// Exhaustive-threshold FPR@TPR: scans every observed score as tau.
    pub fn fpr_at_tpr_exhaustive(s: &ScoreSet, tpr_target: f64) -> Result<f64> {
        let (n_id, n_ood) = split_counts(s)?;
        let mut taus = s.scores().to_vec();
        taus.sort_by(|a, b| b.partial_cmp(a).unwrap());
        taus.dedup();
        for &tau in &taus {
            let tpr = s
                .scores()
                .iter()
                .zip(s.is_id())
                .filter(|(&v, &id)| id && v >= tau)
                .count() as f64
                / n_id as f64;
            if tpr >= tpr_target {
                let fp = s
                    .scores()
                    .iter()
                    .zip(s.is_id())
                    .filter(|(&v, &id)| !id && v >= tau)
                    .count();
                return Ok(fp as f64 / n_ood as f64);
            }
        }
        // tpr_target <= 1 and the smallest tau accepts everything, so this is
        // unreachable for valid inputs
        Err(OodError::DegenerateSet("no threshold reaches the target"))
    }

    /// Exhaustive-threshold AUPR with per-threshold recounting.
    pub fn aupr_exhaustive(s: &ScoreSet) -> Result<f64> {
        let (n_id, _) = split_counts(s)?;
        let mut taus = s.scores().to_vec();
        taus.sort_by(|a, b| b.partial_cmp(a).unwrap());
        taus.dedup();
        let mut area = 0.0;
        let mut recall_prev = 0.0;
        for &tau in &taus {
            let tp = s
                .scores()
                .iter()
                .zip(s.is_id())
                .filter(|(&v, &id)| id && v >= tau)
                .count();
            let positives = s.scores().iter().filter(|&&v| v >= tau).count();
            let recall = tp as f64 / n_id as f64;
            let precision = tp as f64 / positives as f64;
            area += (recall - recall_prev) * precision;
            recall_prev = recall;
        }
        Ok(area)
    }
}
