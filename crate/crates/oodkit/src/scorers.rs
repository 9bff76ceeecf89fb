//! Logit- and feature-based OoD scoring functions.
//!
//! Every scorer follows the same convention: higher score = more ID. Sign
//! flips are applied internally where the underlying quantity runs the other
//! way (distances, entropy-like sums).

use crate::error::{OodError, Result};
use crate::exec;
use crate::linalg::{cholesky, cholesky_inverse, quad_form, sym_eigen_desc, Mat};
use crate::numeric::{l2_norm, logsumexp, softmax};
use crate::types::{ActivationSet, LinearHead, ScoreSet};

pub const DEFAULT_TEMPERATURE: f64 = 1.0;
pub const DEFAULT_GEN_GAMMA: f64 = 0.1;
pub const DEFAULT_GEN_TOP_M_CAP: usize = 100;
/// Ridge multiplier; the effective ridge added to a covariance is
/// `ridge * trace(Sigma) / D`, keeping the conditioning scale-free.
pub const DEFAULT_MDS_RIDGE: f64 = 1e-6;

/// Energy score: temperature-scaled log-sum-exp of the logits.
pub fn score_ebo(z: &[f64], temperature: f64) -> Result<f64> {
    logsumexp(z, temperature)
}

/// Maximum softmax probability.
pub fn score_msp(z: &[f64]) -> Result<f64> {
    let p = softmax(z)?;
    Ok(p.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
}

/// Maximum raw logit.
pub fn score_mls(z: &[f64]) -> Result<f64> {
    if z.is_empty() {
        return Err(OodError::EmptyInput("mls"));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(OodError::NonFiniteInput("mls"));
    }
    Ok(z.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
}

/// Maximum softmax probability after temperature scaling.
pub fn score_tempscale(z: &[f64], temperature: f64) -> Result<f64> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(OodError::NonPositiveTemperature(temperature));
    }
    let scaled: Vec<f64> = z.iter().map(|v| v / temperature).collect();
    score_msp(&scaled)
}

/// Generalized entropy over the top-M softmax probabilities:
/// -sum p_j^gamma (1 - p_j)^gamma, zero in the one-hot limit.
pub fn score_gen(z: &[f64], gamma: f64, top_m: usize) -> Result<f64> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(OodError::BadParameter(format!(
            "gen gamma must lie in (0, 1], got {gamma}"
        )));
    }
    if top_m == 0 || top_m > z.len() {
        return Err(OodError::BadParameter(format!(
            "gen top_m must lie in [1, {}], got {top_m}",
            z.len()
        )));
    }
    let mut p = softmax(z)?;
    p.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let sum: f64 = p[..top_m]
        .iter()
        .map(|&q| q.powf(gamma) * (1.0 - q).powf(gamma))
        .sum();
    Ok(-sum)
}

/// Fitted Mahalanobis model: class means with a shared precision, plus an
/// optional class-agnostic background Gaussian for the relative variant.
#[derive(Debug, Clone)]
pub struct MdsModel {
    pub class_means: Mat,
    pub shared_precision: Mat,
    pub background_mean: Option<Vec<f64>>,
    pub background_precision: Option<Mat>,
}

impl MdsModel {
    /// Checks the fitted-model invariants: symmetric precisions that admit a
    /// Cholesky factorization. Hand-built degenerate models (e.g. a zero
    /// background precision) skip this on purpose.
    pub fn validate(&self) -> Result<()> {
        let check = |m: &Mat| -> Result<()> {
            if m.symmetry_defect() > 1e-9 {
                return Err(OodError::BadParameter(
                    "precision matrix not symmetric within 1e-9".into(),
                ));
            }
            cholesky(m)?;
            Ok(())
        };
        check(&self.shared_precision)?;
        if let Some(ref bg) = self.background_precision {
            check(bg)?;
        }
        Ok(())
    }
}

fn class_means(id_train: &ActivationSet) -> Result<(Mat, Vec<usize>)> {
    let labels = id_train.labels().ok_or(OodError::MissingLabels)?;
    let classes = labels.iter().copied().max().unwrap() as usize + 1;
    let d = id_train.n_dims();
    let mut means = Mat::zeros(classes, d);
    let mut counts = vec![0usize; classes];
    for (i, row) in id_train.rows().enumerate() {
        let c = labels[i] as usize;
        counts[c] += 1;
        for (j, &v) in row.iter().enumerate() {
            means.set(c, j, means.get(c, j) + v);
        }
    }
    for (c, &count) in counts.iter().enumerate() {
        if count == 0 {
            return Err(OodError::BadParameter(format!(
                "class {c} has no samples"
            )));
        }
        for j in 0..d {
            means.set(c, j, means.get(c, j) / count as f64);
        }
    }
    Ok((means, counts))
}

/// Covariance of `rows - center(row)` with the maximum-likelihood (1/N)
/// normalizer plus a scale-free ridge.
fn ridged_covariance<F>(set: &ActivationSet, center: F, ridge: f64) -> Result<Mat>
where
    F: Fn(usize) -> Vec<f64>,
{
    let d = set.n_dims();
    let n = set.n_samples() as f64;
    let mut cov = Mat::zeros(d, d);
    for i in 0..set.n_samples() {
        let c = center(i);
        let row = set.row(i);
        let diff: Vec<f64> = row.iter().zip(&c).map(|(a, m)| a - m).collect();
        for r in 0..d {
            let dr = diff[r];
            for s in r..d {
                cov.set(r, s, cov.get(r, s) + dr * diff[s]);
            }
        }
    }
    for r in 0..d {
        for s in r..d {
            let v = cov.get(r, s) / n;
            cov.set(r, s, v);
            cov.set(s, r, v);
        }
    }
    let eff = ridge * cov.trace() / d as f64;
    for r in 0..d {
        cov.set(r, r, cov.get(r, r) + eff);
    }
    Ok(cov)
}

/// Fits class means and the shared within-class covariance, inverted via
/// Cholesky.
pub fn fit_mds(id_train: &ActivationSet, ridge: f64) -> Result<MdsModel> {
    if ridge < 0.0 {
        return Err(OodError::BadParameter(format!(
            "mds ridge must be nonnegative, got {ridge}"
        )));
    }
    let (means, _) = class_means(id_train)?;
    let labels = id_train.labels().unwrap();
    let cov = ridged_covariance(
        id_train,
        |i| means.row(labels[i] as usize).to_vec(),
        ridge,
    )?;
    let precision = cholesky_inverse(&cov)?;
    let model = MdsModel {
        class_means: means,
        shared_precision: precision,
        background_mean: None,
        background_precision: None,
    };
    model.validate()?;
    Ok(model)
}

/// Negated squared Mahalanobis distance to the nearest class mean.
pub fn score_mds(a: &[f64], model: &MdsModel) -> Result<f64> {
    let d = model.class_means.cols();
    if a.len() != d {
        return Err(OodError::DimensionMismatch {
            context: "mds score",
            expected: d,
            got: a.len(),
        });
    }
    let mut best = f64::INFINITY;
    for c in 0..model.class_means.rows() {
        let diff: Vec<f64> = a
            .iter()
            .zip(model.class_means.row(c))
            .map(|(x, m)| x - m)
            .collect();
        let md = quad_form(&model.shared_precision, &diff)?;
        if md < best {
            best = md;
        }
    }
    Ok(-best)
}

/// Fits the relative variant: the MDS model plus a single background Gaussian
/// over all ID features.
pub fn fit_rmds(id_train: &ActivationSet, ridge: f64) -> Result<MdsModel> {
    let mut model = fit_mds(id_train, ridge)?;
    let d = id_train.n_dims();
    let n = id_train.n_samples() as f64;
    let mut mean = vec![0.0; d];
    for row in id_train.rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let bg_cov = ridged_covariance(id_train, |_| mean.clone(), ridge)?;
    let bg_precision = cholesky_inverse(&bg_cov)?;
    model.background_mean = Some(mean);
    model.background_precision = Some(bg_precision);
    model.validate()?;
    Ok(model)
}

/// -min_c [MD_c(a) - MD_bg(a)] with squared Mahalanobis distances under the
/// respective precisions. A zero background precision degenerates to the
/// plain MDS score.
pub fn score_rmds(a: &[f64], model: &MdsModel) -> Result<f64> {
    let bg_mean = model
        .background_mean
        .as_ref()
        .ok_or_else(|| OodError::BadParameter("rmds model lacks a background".into()))?;
    let bg_precision = model
        .background_precision
        .as_ref()
        .ok_or_else(|| OodError::BadParameter("rmds model lacks a background".into()))?;
    let diff_bg: Vec<f64> = a.iter().zip(bg_mean).map(|(x, m)| x - m).collect();
    let md_bg = quad_form(bg_precision, &diff_bg)?;
    let mut best = f64::INFINITY;
    for c in 0..model.class_means.rows() {
        let diff: Vec<f64> = a
            .iter()
            .zip(model.class_means.row(c))
            .map(|(x, m)| x - m)
            .collect();
        let md = quad_form(&model.shared_precision, &diff)?;
        if md - md_bg < best {
            best = md - md_bg;
        }
    }
    Ok(-best)
}

/// Virtual-logit model: the complement of the top-K principal subspace of the
/// centered ID features, with a scale that matches residual norms to logits.
#[derive(Debug, Clone)]
pub struct VimModel {
    pub feature_mean: Vec<f64>,
    /// D x (D-K), columns orthonormal, spanning the residual subspace.
    pub residual_basis: Mat,
    pub alpha: f64,
}

impl VimModel {
    /// Norm of the projection of `a - feature_mean` onto the residual
    /// subspace.
    pub fn residual_norm(&self, a: &[f64]) -> Result<f64> {
        if a.len() != self.feature_mean.len() {
            return Err(OodError::DimensionMismatch {
                context: "vim residual",
                expected: self.feature_mean.len(),
                got: a.len(),
            });
        }
        let centered: Vec<f64> = a.iter().zip(&self.feature_mean).map(|(x, m)| x - m).collect();
        let coords = self.residual_basis.matvec_t(&centered)?;
        Ok(l2_norm(&coords))
    }
}

/// Fits the virtual-logit model from ID features and the head.
pub fn fit_vim(id_train: &ActivationSet, head: &LinearHead, k: usize) -> Result<VimModel> {
    let d = id_train.n_dims();
    if k == 0 || k >= d {
        return Err(OodError::BadSubspaceDim { k, d });
    }
    if head.dims() != d {
        return Err(OodError::DimensionMismatch {
            context: "vim fit",
            expected: d,
            got: head.dims(),
        });
    }
    let n = id_train.n_samples() as f64;
    let mut mean = vec![0.0; d];
    for row in id_train.rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let cov = ridged_covariance(id_train, |_| mean.clone(), 0.0)?;
    let (_, vectors) = sym_eigen_desc(&cov)?;
    // residual basis: eigenvectors after the top K
    let mut basis = Mat::zeros(d, d - k);
    for col in k..d {
        for r in 0..d {
            basis.set(r, col - k, vectors.get(r, col));
        }
    }
    // orthonormality check within 1e-8
    for i in 0..(d - k) {
        for j in i..(d - k) {
            let dot: f64 = (0..d).map(|r| basis.get(r, i) * basis.get(r, j)).sum();
            let want = if i == j { 1.0 } else { 0.0 };
            if (dot - want).abs() > 1e-8 {
                return Err(OodError::EigenFailure(
                    "residual basis not orthonormal within 1e-8".into(),
                ));
            }
        }
    }

    let model = VimModel {
        feature_mean: mean,
        residual_basis: basis,
        alpha: 1.0,
    };
    let mut logit_sum = 0.0;
    let mut residual_sum = 0.0;
    for row in id_train.rows() {
        let z = head.logits(row)?;
        logit_sum += z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        residual_sum += model.residual_norm(row)?;
    }
    if residual_sum == 0.0 {
        return Err(OodError::BadParameter(
            "vim fit: all training residuals are zero".into(),
        ));
    }
    let alpha = (logit_sum / n) / (residual_sum / n);
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(OodError::BadParameter(format!(
            "vim alpha must be finite positive, got {alpha}"
        )));
    }
    Ok(VimModel { alpha, ..model })
}

/// Virtual-logit score: log( sum_c e^{z_c} / (sum_c e^{z_c} + e^{v}) ) with
/// v = alpha * residual norm, computed through log-sum-exp for safety.
pub fn score_vim(a: &[f64], head: &LinearHead, model: &VimModel) -> Result<f64> {
    let z = head.logits(a)?;
    let v = model.alpha * model.residual_norm(a)?;
    score_vim_from_logits(&z, v)
}

fn score_vim_from_logits(z: &[f64], virtual_logit: f64) -> Result<f64> {
    let mut extended = z.to_vec();
    extended.push(virtual_logit);
    Ok(logsumexp(z, 1.0)? - logsumexp(&extended, 1.0)?)
}

/// Scorer configuration prior to calibration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScorerSpec {
    pub kind: ScorerKind,
    pub temperature: f64,
    pub gen_gamma: f64,
    pub gen_top_m: Option<usize>,
    pub mds_ridge: f64,
    pub vim_subspace_dim: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScorerKind {
    Ebo,
    Msp,
    Mls,
    TempscaleMsp,
    Gen,
    Mds,
    Rmds,
    Vim,
}

impl ScorerKind {
    pub fn name(self) -> &'static str {
        match self {
            ScorerKind::Ebo => "ebo",
            ScorerKind::Msp => "msp",
            ScorerKind::Mls => "mls",
            ScorerKind::TempscaleMsp => "tempscale",
            ScorerKind::Gen => "gen",
            ScorerKind::Mds => "mds",
            ScorerKind::Rmds => "rmds",
            ScorerKind::Vim => "vim",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Ok(match name {
            "ebo" => ScorerKind::Ebo,
            "msp" => ScorerKind::Msp,
            "mls" => ScorerKind::Mls,
            "tempscale" => ScorerKind::TempscaleMsp,
            "gen" => ScorerKind::Gen,
            "mds" => ScorerKind::Mds,
            "rmds" => ScorerKind::Rmds,
            "vim" => ScorerKind::Vim,
            other => {
                return Err(OodError::BadParameter(format!("unknown scorer `{other}`")))
            }
        })
    }

    /// True if calibration on ID training features is required.
    pub fn needs_fit(self) -> bool {
        matches!(self, ScorerKind::Mds | ScorerKind::Rmds | ScorerKind::Vim)
    }
}

impl ScorerSpec {
    pub fn new(kind: ScorerKind) -> Self {
        ScorerSpec {
            kind,
            temperature: DEFAULT_TEMPERATURE,
            gen_gamma: DEFAULT_GEN_GAMMA,
            gen_top_m: None,
            mds_ridge: DEFAULT_MDS_RIDGE,
            vim_subspace_dim: None,
        }
    }
}

/// A calibrated scorer ready to consume (features, logits) pairs.
#[derive(Debug, Clone)]
pub enum Scorer {
    Ebo { temperature: f64 },
    Msp,
    Mls,
    Tempscale { temperature: f64 },
    Gen { gamma: f64, top_m: usize },
    Mds(MdsModel),
    Rmds(MdsModel),
    Vim(VimModel),
}

impl Scorer {
    /// Builds a scorer from its spec. Distance and virtual-logit scorers need
    /// labeled ID training features; the logit scorers need nothing.
    pub fn fit(
        spec: &ScorerSpec,
        id_train: Option<&ActivationSet>,
        head: &LinearHead,
    ) -> Result<Scorer> {
        let need_train = || {
            id_train.ok_or_else(|| {
                OodError::BadParameter(format!(
                    "scorer `{}` needs ID training features for calibration",
                    spec.kind.name()
                ))
            })
        };
        Ok(match spec.kind {
            ScorerKind::Ebo => Scorer::Ebo {
                temperature: spec.temperature,
            },
            ScorerKind::Msp => Scorer::Msp,
            ScorerKind::Mls => Scorer::Mls,
            ScorerKind::TempscaleMsp => Scorer::Tempscale {
                temperature: spec.temperature,
            },
            ScorerKind::Gen => Scorer::Gen {
                gamma: spec.gen_gamma,
                top_m: spec
                    .gen_top_m
                    .unwrap_or_else(|| DEFAULT_GEN_TOP_M_CAP.min(head.classes())),
            },
            ScorerKind::Mds => Scorer::Mds(fit_mds(need_train()?, spec.mds_ridge)?),
            ScorerKind::Rmds => Scorer::Rmds(fit_rmds(need_train()?, spec.mds_ridge)?),
            ScorerKind::Vim => {
                let train = need_train()?;
                let k = spec
                    .vim_subspace_dim
                    .unwrap_or_else(|| (train.n_dims() / 2).max(1));
                Scorer::Vim(fit_vim(train, head, k)?)
            }
        })
    }

    /// Scores one sample from its (possibly enhanced) features and logits.
    pub fn score(&self, features: &[f64], logits: &[f64]) -> Result<f64> {
        match self {
            Scorer::Ebo { temperature } => score_ebo(logits, *temperature),
            Scorer::Msp => score_msp(logits),
            Scorer::Mls => score_mls(logits),
            Scorer::Tempscale { temperature } => score_tempscale(logits, *temperature),
            Scorer::Gen { gamma, top_m } => score_gen(logits, *gamma, *top_m),
            Scorer::Mds(model) => score_mds(features, model),
            Scorer::Rmds(model) => score_rmds(features, model),
            Scorer::Vim(model) => {
                let v = model.alpha * model.residual_norm(features)?;
                score_vim_from_logits(logits, v)
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Scorer::Ebo { .. } => "ebo",
            Scorer::Msp => "msp",
            Scorer::Mls => "mls",
            Scorer::Tempscale { .. } => "tempscale",
            Scorer::Gen { .. } => "gen",
            Scorer::Mds(_) => "mds",
            Scorer::Rmds(_) => "rmds",
            Scorer::Vim(_) => "vim",
        }
    }
}

/// Enhance, forward and score every row of a tagged set. Distance scorers
/// consume the enhanced features directly; logit scorers the post-enhancer
/// logits. `is_id` comes from the set tag.
pub fn score_set(
    set: &ActivationSet,
    head: &LinearHead,
    enhancer: &crate::enhancers::EnhancerSpec,
    scorer: &Scorer,
) -> Result<ScoreSet> {
    let tag = set.tag().ok_or(OodError::MissingTag)?;
    enhancer.validate()?;
    let scores: Result<Vec<f64>> = exec::map_indexed(set.n_samples(), |i| {
        let (features, logits) = crate::enhancers::forward_features(set.row(i), head, enhancer)?;
        scorer.score(&features, &logits)
    })
    .into_iter()
    .collect();
    ScoreSet::new(scores?, vec![tag.is_id(); set.n_samples()])
}
