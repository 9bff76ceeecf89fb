//! Diagnostic computations over activation populations: the Gamma(p) curve
//! comparing top-percentile mass ratios between ID and OoD sets, the
//! mean/std-ratio condition behind the scaling theory, ranked residual
//! profiles against a reference, per-sample scaling-exponent diagnostics and
//! energy-score distribution statistics.
//!
//! Per-sample statistics accumulate in deterministic sample order.

use crate::enhancers::{build_profile, forward, EnhancerSpec};
use crate::error::{OodError, Result};
use crate::exec;
use crate::scorers::score_ebo;
use crate::types::{ActivationSet, ReferenceProfile, ScoreSet};

/// How Gamma is estimated from per-sample sums.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GammaEstimator {
    /// Every sample contributes its own Q_p/Q ratio; Gamma is the difference
    /// of per-side means. Default.
    PerSample,
    /// Ratio of pooled sums per side: (sum_i Q_p,i) / (sum_i Q_i).
    PooledSums,
}

/// One Gamma estimate with its bookkeeping: samples with Q = 0 cannot
/// contribute a ratio, so they are excluded and reported, never silently
/// dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaEstimate {
    pub gamma: f64,
    /// Standard error of the difference of per-side means; only defined for
    /// the per-sample estimator with at least two usable samples per side.
    pub stderr: Option<f64>,
    pub n_id_used: usize,
    pub n_ood_used: usize,
    pub excluded_id: Vec<usize>,
    pub excluded_ood: Vec<usize>,
}

fn per_sample_ratios(set: &ActivationSet, p: f64) -> Result<(Vec<f64>, Vec<usize>, f64, f64)> {
    let splits: Result<Vec<(f64, f64)>> = exec::map_indexed(set.n_samples(), |i| {
        let s = crate::enhancers::ash_split(set.row(i), p)?;
        Ok((s.q, s.q_p))
    })
    .into_iter()
    .collect();
    let splits = splits?;
    let mut ratios = Vec::with_capacity(set.n_samples());
    let mut excluded = Vec::new();
    let mut q_total = 0.0;
    let mut q_p_total = 0.0;
    for (i, &(q, q_p)) in splits.iter().enumerate() {
        q_total += q;
        q_p_total += q_p;
        if q == 0.0 {
            excluded.push(i);
        } else {
            ratios.push(q_p / q);
        }
    }
    Ok((ratios, excluded, q_total, q_p_total))
}

fn mean_and_var(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Gamma(p) = mean_ID(Q_p/Q) - mean_OoD(Q_p/Q) with the default per-sample
/// estimator.
pub fn gamma_at(id_set: &ActivationSet, ood_set: &ActivationSet, p: f64) -> Result<GammaEstimate> {
    gamma_at_with(id_set, ood_set, p, GammaEstimator::PerSample)
}

pub fn gamma_at_with(
    id_set: &ActivationSet,
    ood_set: &ActivationSet,
    p: f64,
    estimator: GammaEstimator,
) -> Result<GammaEstimate> {
    let (id_ratios, excluded_id, id_q, id_qp) = per_sample_ratios(id_set, p)?;
    let (ood_ratios, excluded_ood, ood_q, ood_qp) = per_sample_ratios(ood_set, p)?;
    if id_ratios.is_empty() {
        return Err(OodError::DegenerateSet(
            "every ID sample has zero activation mass",
        ));
    }
    if ood_ratios.is_empty() {
        return Err(OodError::DegenerateSet(
            "every OoD sample has zero activation mass",
        ));
    }
    match estimator {
        GammaEstimator::PerSample => {
            let (id_mean, id_var) = mean_and_var(&id_ratios);
            let (ood_mean, ood_var) = mean_and_var(&ood_ratios);
            let stderr = if id_ratios.len() >= 2 && ood_ratios.len() >= 2 {
                Some(
                    (id_var / id_ratios.len() as f64 + ood_var / ood_ratios.len() as f64).sqrt(),
                )
            } else {
                None
            };
            Ok(GammaEstimate {
                gamma: id_mean - ood_mean,
                stderr,
                n_id_used: id_ratios.len(),
                n_ood_used: ood_ratios.len(),
                excluded_id,
                excluded_ood,
            })
        }
        GammaEstimator::PooledSums => {
            if id_q == 0.0 || ood_q == 0.0 {
                return Err(OodError::DegenerateSet("pooled activation mass is zero"));
            }
            Ok(GammaEstimate {
                gamma: id_qp / id_q - ood_qp / ood_q,
                stderr: None,
                n_id_used: id_ratios.len(),
                n_ood_used: ood_ratios.len(),
                excluded_id,
                excluded_ood,
            })
        }
    }
}

/// Gamma sampled over a percentile grid with Monte-Carlo standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaCurve {
    pub percentiles: Vec<f64>,
    pub gamma: Vec<f64>,
    pub stderr: Vec<f64>,
    pub excluded_id: usize,
    pub excluded_ood: usize,
}

pub fn gamma_curve(
    id_set: &ActivationSet,
    ood_set: &ActivationSet,
    grid: &[f64],
) -> Result<GammaCurve> {
    if grid.is_empty() {
        return Err(OodError::EmptyInput("gamma grid"));
    }
    let mut gamma = Vec::with_capacity(grid.len());
    let mut stderr = Vec::with_capacity(grid.len());
    let mut excluded_id = 0;
    let mut excluded_ood = 0;
    for &p in grid {
        let est = gamma_at(id_set, ood_set, p)?;
        gamma.push(est.gamma);
        stderr.push(est.stderr.unwrap_or(0.0));
        excluded_id = excluded_id.max(est.excluded_id.len());
        excluded_ood = excluded_ood.max(est.excluded_ood.len());
    }
    Ok(GammaCurve {
        percentiles: grid.to_vec(),
        gamma,
        stderr,
        excluded_id,
        excluded_ood,
    })
}

/// Pooled mean/std ratios per side and whether the ID ratio strictly exceeds
/// the OoD one. The rectified flags record the all-nonnegative heuristic that
/// separates the two scaling regimes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuSigmaCondition {
    pub ratio_id: f64,
    pub ratio_ood: f64,
    pub holds: bool,
    pub rectified_id: bool,
    pub rectified_ood: bool,
}

fn pooled_mean_std(set: &ActivationSet) -> Result<(f64, f64)> {
    let vals = set.data();
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if var == 0.0 {
        return Err(OodError::ZeroVariance("pooled activations"));
    }
    Ok((mean, var.sqrt()))
}

/// True when every activation in the set is nonnegative.
pub fn is_rectified(set: &ActivationSet) -> bool {
    set.data().iter().all(|&v| v >= 0.0)
}

pub fn mu_sigma_condition(
    id_set: &ActivationSet,
    ood_set: &ActivationSet,
) -> Result<MuSigmaCondition> {
    let (id_mean, id_std) = pooled_mean_std(id_set)?;
    let (ood_mean, ood_std) = pooled_mean_std(ood_set)?;
    let ratio_id = id_mean / id_std;
    let ratio_ood = ood_mean / ood_std;
    Ok(MuSigmaCondition {
        ratio_id,
        ratio_ood,
        holds: ratio_id > ratio_ood,
        rectified_id: is_rectified(id_set),
        rectified_ood: is_rectified(ood_set),
    })
}

/// Mean ranked OoD activations and their signed deviation from the reference
/// profile at every rank.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualProfile {
    pub ranks: Vec<usize>,
    pub ood_mean_ranked: Vec<f64>,
    pub residual: Vec<f64>,
}

pub fn residual_profile(
    ood_set: &ActivationSet,
    profile: &ReferenceProfile,
) -> Result<ResidualProfile> {
    let d = profile.dim();
    if ood_set.n_dims() != d {
        return Err(OodError::DimensionMismatch {
            context: "residual profile",
            expected: d,
            got: ood_set.n_dims(),
        });
    }
    // same computation as profile building, against a different population
    let mean_ranked = build_profile(ood_set)?;
    let ood_mean_ranked = mean_ranked.mu().to_vec();
    let residual: Vec<f64> = ood_mean_ranked
        .iter()
        .zip(profile.mu())
        .map(|(o, m)| o - m)
        .collect();
    Ok(ResidualProfile {
        ranks: (0..d).collect(),
        ood_mean_ranked,
        residual,
    })
}

/// Per-sample scaling-exponent diagnostics: the exponent r = Q/Q_p for every
/// sample (None where the split degenerates), the rectified heuristic, and
/// whether any sample left the r >= 1 regime the rectified theory guarantees.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleDiagnostics {
    pub exponents: Vec<Option<f64>>,
    pub degenerate_samples: Vec<usize>,
    pub rectified: bool,
    /// True when some sample has r outside [1, inf), i.e. the monotonic
    /// relationship between r and the percentile is broken.
    pub monotonicity_broken: bool,
}

pub fn scale_diagnostics(set: &ActivationSet, p: f64) -> Result<ScaleDiagnostics> {
    let exponents: Result<Vec<Option<f64>>> = exec::map_indexed(set.n_samples(), |i| {
        match crate::enhancers::scale_exponent(set.row(i), p) {
            Ok(r) => Ok(Some(r)),
            Err(OodError::DegenerateSplit(_)) => Ok(None),
            Err(e) => Err(e),
        }
    })
    .into_iter()
    .collect();
    let exponents = exponents?;
    let degenerate_samples: Vec<usize> = exponents
        .iter()
        .enumerate()
        .filter(|(_, r)| r.is_none())
        .map(|(i, _)| i)
        .collect();
    let monotonicity_broken = exponents
        .iter()
        .flatten()
        .any(|&r| !(1.0..f64::INFINITY).contains(&r));
    Ok(ScaleDiagnostics {
        degenerate_samples,
        rectified: is_rectified(set),
        monotonicity_broken,
        exponents,
    })
}

/// Energy-score distribution statistics under an enhancer, with the mean
/// shift against a baseline enhancer and (when an OoD set is supplied) the
/// AUROC change.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyStats {
    pub mean: f64,
    pub std: f64,
    pub delta_mean_vs_baseline: f64,
    pub auroc_delta: Option<f64>,
}

fn ebo_scores(
    set: &ActivationSet,
    head: &crate::types::LinearHead,
    enhancer: &EnhancerSpec,
    temperature: f64,
) -> Result<Vec<f64>> {
    exec::map_indexed(set.n_samples(), |i| {
        score_ebo(&forward(set.row(i), head, enhancer)?, temperature)
    })
    .into_iter()
    .collect()
}

fn population_stats(values: &[f64]) -> (f64, f64) {
    // shifted accumulation: exact (zero variance) for constant inputs
    let n = values.len() as f64;
    let shift = values[0];
    let mean = shift + values.iter().map(|v| v - shift).sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn energy_stats(
    set: &ActivationSet,
    ood_set: Option<&ActivationSet>,
    head: &crate::types::LinearHead,
    enhancer: &EnhancerSpec,
    baseline: &EnhancerSpec,
    temperature: f64,
) -> Result<EnergyStats> {
    let enhanced = ebo_scores(set, head, enhancer, temperature)?;
    let base = ebo_scores(set, head, baseline, temperature)?;
    let (mean, std) = population_stats(&enhanced);
    let (base_mean, _) = population_stats(&base);

    let auroc_delta = match ood_set {
        None => None,
        Some(ood) => {
            let make = |enh: &EnhancerSpec| -> Result<f64> {
                let id_scores = ebo_scores(set, head, enh, temperature)?;
                let ood_scores = ebo_scores(ood, head, enh, temperature)?;
                let mut scores = id_scores;
                let n_id = scores.len();
                scores.extend(ood_scores);
                let mut is_id = vec![true; n_id];
                is_id.extend(vec![false; scores.len() - n_id]);
                crate::metrics::auroc(&ScoreSet::new(scores, is_id)?)
            };
            Some(make(enhancer)? - make(baseline)?)
        }
    };
    Ok(EnergyStats {
        mean,
        std,
        delta_mean_vs_baseline: mean - base_mean,
        auroc_delta,
    })
}

/// One labelled row of the inhibit/excite ablation.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub label: String,
    pub stats: EnergyStats,
}

/// The four-row ablation harness: plain energy baseline, then the one-sided
/// shifts, then the full shift, each with (mean, std, delta mean, delta
/// AUROC) over the supplied ID/OoD pair.
pub fn energy_ablation(
    id_set: &ActivationSet,
    ood_set: &ActivationSet,
    head: &crate::types::LinearHead,
    profile: &ReferenceProfile,
    temperature: f64,
) -> Result<Vec<AblationRow>> {
    let baseline = EnhancerSpec::identity();
    let variants: Vec<(String, EnhancerSpec)> = vec![
        ("ebo".into(), EnhancerSpec::identity()),
        (
            "ebo+ras_inhibit".into(),
            EnhancerSpec::ras_inhibit(profile.clone()),
        ),
        (
            "ebo+ras_excite".into(),
            EnhancerSpec::ras_excite(profile.clone()),
        ),
        ("ebo+ras".into(), EnhancerSpec::ras(profile.clone())),
    ];
    let mut rows = Vec::with_capacity(variants.len());
    for (label, enh) in variants {
        let stats = energy_stats(id_set, Some(ood_set), head, &enh, &baseline, temperature)?;
        rows.push(AblationRow { label, stats });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{ActivationSet, DistributionTag, LinearHead};

    fn set(rows: &[Vec<f64>], tag: DistributionTag) -> ActivationSet {
        ActivationSet::from_rows(rows, Some(tag)).unwrap()
    }

    fn lcg_rows(seed: u64, n: usize, d: usize, offset: f64) -> Vec<Vec<f64>> {
        let mut s = seed;
        (0..n)
            .map(|_| {
                (0..d)
                    .map(|_| {
                        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                        (s >> 11) as f64 / (1u64 << 53) as f64 * 2.0 + offset
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn gamma_of_identical_sets_is_zero() {
        let rows = lcg_rows(3, 20, 12, 0.1);
        let a = set(&rows, DistributionTag::IdTest);
        let b = set(&rows, DistributionTag::Ood);
        for p in [0.0, 25.0, 60.0, 95.0] {
            let est = gamma_at(&a, &b, p).unwrap();
            assert_eq!(est.gamma, 0.0);
        }
    }

    #[test]
    fn gamma_single_sample_hand_case() {
        // ID [1,2,3,4] at p=50: Q_p/Q = 7/10; OoD [1,1,1,4]: threshold 1,
        // kept {3}, Q_p/Q = 4/7
        let id = set(&[vec![1.0, 2.0, 3.0, 4.0]], DistributionTag::IdTest);
        let ood = set(&[vec![1.0, 1.0, 1.0, 4.0]], DistributionTag::Ood);
        let est = gamma_at(&id, &ood, 50.0).unwrap();
        assert!((est.gamma - (0.7 - 4.0 / 7.0)).abs() < 1e-12);
        assert!(est.stderr.is_none());
    }

    #[test]
    fn gamma_excludes_zero_mass_samples_with_indices() {
        let id = set(
            &[vec![1.0, 2.0, 3.0], vec![-1.0, 0.0, 1.0], vec![2.0, 2.0, 5.0]],
            DistributionTag::IdTest,
        );
        let ood = set(&[vec![1.0, 1.0, 2.0]], DistributionTag::Ood);
        let est = gamma_at(&id, &ood, 40.0).unwrap();
        assert_eq!(est.excluded_id, vec![1]);
        assert_eq!(est.n_id_used, 2);
    }

    #[test]
    fn gamma_errors_when_all_samples_excluded() {
        let id = set(&[vec![-1.0, 1.0]], DistributionTag::IdTest);
        let ood = set(&[vec![1.0, 2.0]], DistributionTag::Ood);
        assert!(matches!(
            gamma_at(&id, &ood, 40.0),
            Err(OodError::DegenerateSet(_))
        ));
    }

    #[test]
    fn pooled_estimator_uses_pooled_sums() {
        let id = set(
            &[vec![1.0, 2.0, 3.0, 4.0], vec![2.0, 4.0, 6.0, 8.0]],
            DistributionTag::IdTest,
        );
        let ood = set(&[vec![1.0, 1.0, 1.0, 4.0]], DistributionTag::Ood);
        let est = gamma_at_with(&id, &ood, 50.0, GammaEstimator::PooledSums).unwrap();
        // pooled: (7 + 14) / (10 + 20) = 0.7 on the ID side
        assert!((est.gamma - (0.7 - 4.0 / 7.0)).abs() < 1e-12);
        assert!(est.stderr.is_none());
    }

    #[test]
    fn gamma_curve_is_grid_aligned() {
        let id = set(&lcg_rows(5, 30, 16, 0.5), DistributionTag::IdTest);
        let ood = set(&lcg_rows(6, 25, 16, 0.2), DistributionTag::Ood);
        let grid = [5.0, 25.0, 50.0, 75.0, 95.0];
        let curve = gamma_curve(&id, &ood, &grid).unwrap();
        assert_eq!(curve.percentiles, grid.to_vec());
        assert_eq!(curve.gamma.len(), grid.len());
        assert!(curve.stderr.iter().all(|s| s.is_finite() && *s >= 0.0));
    }

    #[test]
    fn gamma_p0_excludes_only_minimum_per_sample() {
        let id = set(&[vec![1.0, 2.0, 3.0]], DistributionTag::IdTest);
        let ood = set(&[vec![1.0, 2.0, 4.0]], DistributionTag::Ood);
        let est = gamma_at(&id, &ood, 0.0).unwrap();
        // ID: kept {2,3} ratio 5/6; OoD: kept {2,4} ratio 6/7
        assert!((est.gamma - (5.0 / 6.0 - 6.0 / 7.0)).abs() < 1e-12);
    }

    #[test]
    fn gamma_stderr_shrinks_as_sqrt_n() {
        // quadrupling the sample count should halve the standard error; check
        // the mean ratio over 20 seeded repetitions at a 3-sigma band
        let mut ratios = Vec::new();
        for rep in 0..20u64 {
            let small = crate::synthlab::sample_rect_gauss(&crate::synthlab::RectGaussSpec {
                mu: 1.0,
                sigma: 1.0,
                dim: 32,
                n: 50,
                rectified: true,
                seed: 9000 + rep,
            })
            .unwrap();
            let big = crate::synthlab::sample_rect_gauss(&crate::synthlab::RectGaussSpec {
                mu: 1.0,
                sigma: 1.0,
                dim: 32,
                n: 200,
                rectified: true,
                seed: 9100 + rep,
            })
            .unwrap();
            let ood_small = crate::synthlab::sample_rect_gauss(&crate::synthlab::RectGaussSpec {
                mu: 0.6,
                sigma: 1.0,
                dim: 32,
                n: 50,
                rectified: true,
                seed: 9200 + rep,
            })
            .unwrap();
            let ood_big = crate::synthlab::sample_rect_gauss(&crate::synthlab::RectGaussSpec {
                mu: 0.6,
                sigma: 1.0,
                dim: 32,
                n: 200,
                rectified: true,
                seed: 9300 + rep,
            })
            .unwrap();
            let se_small = gamma_at(&small, &ood_small, 60.0).unwrap().stderr.unwrap();
            let se_big = gamma_at(&big, &ood_big, 60.0).unwrap().stderr.unwrap();
            ratios.push(se_small / se_big);
        }
        let n = ratios.len() as f64;
        let mean = ratios.iter().sum::<f64>() / n;
        let var = ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let se_of_mean = (var / n).sqrt();
        assert!(
            (mean - 2.0).abs() <= 3.0 * se_of_mean,
            "stderr ratio mean {mean} +/- {se_of_mean} not consistent with 2"
        );
    }

    #[test]
    fn mu_sigma_identical_sets_do_not_hold_strictly() {
        let rows = lcg_rows(9, 10, 8, 0.0);
        let a = set(&rows, DistributionTag::IdTest);
        let b = set(&rows, DistributionTag::Ood);
        let cond = mu_sigma_condition(&a, &b).unwrap();
        assert!(!cond.holds);
        assert_eq!(cond.ratio_id, cond.ratio_ood);
    }

    #[test]
    fn mu_sigma_hand_case() {
        // pooled ID values [0,2]: mean 1, population std 1 -> ratio 1
        // pooled OoD values [1,3]: mean 2, std 1 -> ratio 2
        let id = set(&[vec![0.0, 2.0]], DistributionTag::IdTest);
        let ood = set(&[vec![1.0, 3.0]], DistributionTag::Ood);
        let cond = mu_sigma_condition(&id, &ood).unwrap();
        assert!((cond.ratio_id - 1.0).abs() < 1e-12);
        assert!((cond.ratio_ood - 2.0).abs() < 1e-12);
        assert!(!cond.holds);
        let flipped = mu_sigma_condition(&ood, &id).unwrap();
        assert!(flipped.holds);
    }

    #[test]
    fn mu_sigma_rejects_constant_sets() {
        let a = set(&[vec![1.0, 1.0]], DistributionTag::IdTest);
        let b = set(&[vec![0.0, 2.0]], DistributionTag::Ood);
        assert!(matches!(
            mu_sigma_condition(&a, &b),
            Err(OodError::ZeroVariance(_))
        ));
    }

    #[test]
    fn rectified_heuristic() {
        assert!(is_rectified(&set(&[vec![0.0, 1.0]], DistributionTag::IdTest)));
        assert!(!is_rectified(&set(&[vec![-0.1, 1.0]], DistributionTag::IdTest)));
    }

    #[test]
    fn residual_of_own_source_is_zero() {
        let rows = lcg_rows(21, 40, 10, 0.3);
        let src = set(&rows, DistributionTag::IdTrain);
        let profile = build_profile(&src).unwrap();
        let res = residual_profile(&src, &profile).unwrap();
        assert!(res.residual.iter().all(|&r| r.abs() < 1e-12));
    }

    #[test]
    fn residual_single_sample_is_ranked_minus_mu() {
        let profile = crate::types::ReferenceProfile::new(vec![0.0, 1.0, 2.0], 1, 0).unwrap();
        let ood = set(&[vec![5.0, 3.0, 4.0]], DistributionTag::Ood);
        let res = residual_profile(&ood, &profile).unwrap();
        assert_eq!(res.ood_mean_ranked, vec![3.0, 4.0, 5.0]);
        assert_eq!(res.residual, vec![3.0, 3.0, 3.0]);
        assert_eq!(res.ranks, vec![0, 1, 2]);
    }

    #[test]
    fn residual_matches_sort_and_average_oracle() {
        let rows = lcg_rows(31, 25, 6, -0.5);
        let profile = crate::types::ReferenceProfile::new(
            vec![-1.0, -0.5, 0.0, 0.5, 1.0, 1.5],
            1,
            0,
        )
        .unwrap();
        let ood = set(&rows, DistributionTag::Ood);
        let res = residual_profile(&ood, &profile).unwrap();
        let mut expect = [0.0; 6];
        for r in &rows {
            let mut s = r.clone();
            s.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for (e, v) in expect.iter_mut().zip(&s) {
                *e += v / 25.0;
            }
        }
        for j in 0..6 {
            assert!((res.ood_mean_ranked[j] - expect[j]).abs() < 1e-12);
            assert!((res.residual[j] - (expect[j] - profile.mu()[j])).abs() < 1e-12);
        }
    }

    #[test]
    fn scale_diagnostics_flags_broken_regime() {
        let rectified = set(&lcg_rows(41, 10, 8, 0.5), DistributionTag::IdTest);
        let diag = scale_diagnostics(&rectified, 50.0).unwrap();
        assert!(diag.rectified);
        assert!(!diag.monotonicity_broken);
        // negative-mass sample: r < 1
        let unrectified = set(
            &[vec![-5.0, -4.0, 1.0, 2.0], vec![1.0, 2.0, 3.0, 4.0]],
            DistributionTag::IdTest,
        );
        let diag = scale_diagnostics(&unrectified, 50.0).unwrap();
        assert!(!diag.rectified);
        assert!(diag.monotonicity_broken);
        assert!(diag.exponents[0].unwrap() < 1.0);
    }

    #[test]
    fn energy_stats_enhancer_equal_to_baseline() {
        let head =
            LinearHead::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.0, 0.0]).unwrap();
        let id = set(&lcg_rows(51, 12, 2, 0.0), DistributionTag::IdTest);
        let e = energy_stats(
            &id,
            None,
            &head,
            &EnhancerSpec::identity(),
            &EnhancerSpec::identity(),
            1.0,
        )
        .unwrap();
        assert_eq!(e.delta_mean_vs_baseline, 0.0);
        assert!(e.auroc_delta.is_none());
    }

    #[test]
    fn energy_stats_constant_logits_have_zero_std() {
        let head =
            LinearHead::from_rows(&[vec![0.0, 0.0], vec![0.0, 0.0]], vec![1.0, -1.0]).unwrap();
        let id = set(&lcg_rows(61, 9, 2, 0.0), DistributionTag::IdTest);
        let e = energy_stats(
            &id,
            None,
            &head,
            &EnhancerSpec::identity(),
            &EnhancerSpec::identity(),
            1.0,
        )
        .unwrap();
        assert_eq!(e.std, 0.0);
    }

    #[test]
    fn energy_stats_matches_two_pass_oracle() {
        let head =
            LinearHead::from_rows(&[vec![0.7, -0.2], vec![0.1, 0.9]], vec![0.05, -0.05]).unwrap();
        let id = set(&lcg_rows(71, 15, 2, 0.2), DistributionTag::IdTest);
        let enh = EnhancerSpec::react(0.9);
        let e = energy_stats(&id, None, &head, &enh, &EnhancerSpec::identity(), 1.0).unwrap();
        // independent two-pass route
        let mut scores = Vec::new();
        for row in id.rows() {
            let f: Vec<f64> = row.iter().map(|&v| v.min(0.9)).collect();
            let z = head.logits(&f).unwrap();
            scores.push(score_ebo(&z, 1.0).unwrap());
        }
        let mean = scores.iter().sum::<f64>() / scores.len() as f64;
        let var = scores.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / scores.len() as f64;
        assert!((e.mean - mean).abs() < 1e-12);
        assert!((e.std - var.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn ablation_emits_four_rows() {
        let head =
            LinearHead::from_rows(&[vec![0.5, 0.5], vec![0.5, -0.5]], vec![0.0, 0.0]).unwrap();
        let id = set(&lcg_rows(81, 20, 2, 0.5), DistributionTag::IdTest);
        let ood = set(&lcg_rows(82, 20, 2, 0.0), DistributionTag::Ood);
        let profile = build_profile(&id).unwrap();
        let rows = energy_ablation(&id, &ood, &head, &profile, 1.0).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0].label, "ebo");
        assert_eq!(rows[3].label, "ebo+ras");
        assert!(rows.iter().all(|r| r.stats.std >= 0.0));
        assert!(rows.iter().all(|r| r.stats.auroc_delta.is_some()));
        assert_eq!(rows[0].stats.delta_mean_vs_baseline, 0.0);
    }
}
