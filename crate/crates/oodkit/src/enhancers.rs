//! Activation-editing transforms applied before the linear head.
//!
//! The rank-shift family replaces a sample's sorted activation values with a
//! fixed in-distribution reference profile while keeping the sample's own
//! rank permutation; the one-sided inhibit/excite variants shift only the
//! ranks above/below the reference. The remaining transforms are the usual
//! threshold-based edits: clipping (ReAct), prune/binarize/scale splits
//! (ASH-P/B/S), uniform exponential scaling (SCALE), head sparsification
//! (DICE) and plain l2 normalization.
//!
//! All apply operations are pure; batch forms map rows independently and give
//! the same output for any worker count.

use crate::error::{OodError, Result};
use crate::exec;
use crate::numeric::{ascending_sort_permutation, l2_norm, percentile};
use crate::types::{ActivationSet, LinearHead, ReferenceProfile};

/// Default ReAct clipping percentile.
pub const DEFAULT_REACT_PERCENTILE: f64 = 90.0;
/// Default ASH prune percentile.
pub const DEFAULT_ASH_PERCENTILE: f64 = 90.0;
/// Default SCALE percentile.
pub const DEFAULT_SCALE_PERCENTILE: f64 = 85.0;
/// Default DICE sparsity percentile.
pub const DEFAULT_DICE_SPARSITY: f64 = 90.0;

/// Builds the reference profile: the elementwise mean of ascending-sorted ID
/// training vectors. The reduction runs in fixed sample order, so the result
/// does not depend on the worker count.
pub fn build_profile(id_train: &ActivationSet) -> Result<ReferenceProfile> {
    let d = id_train.n_dims();
    let n = id_train.n_samples();
    let sorted_rows = exec::map_indexed(n, |i| {
        let mut row = id_train.row(i).to_vec();
        row.sort_by(|a, b| a.partial_cmp(b).unwrap());
        row
    });
    let mut mu = vec![0.0f64; d];
    for row in &sorted_rows {
        for (m, v) in mu.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mu {
        *m /= n as f64;
    }
    ReferenceProfile::new(mu, n, id_train.checksum64())
}

fn check_profile_dims(a: &[f64], profile: &ReferenceProfile) -> Result<()> {
    if a.len() != profile.dim() {
        return Err(OodError::DimensionMismatch {
            context: "rank shift",
            expected: profile.dim(),
            got: a.len(),
        });
    }
    Ok(())
}

/// Full rank shift: with pi the ascending sort permutation of `a`, the output
/// carries `mu[j]` at position `pi(j)`. The output is always a permutation of
/// the profile, so its value distribution (and l2 norm) is fixed.
pub fn apply_ras(a: &[f64], profile: &ReferenceProfile) -> Result<Vec<f64>> {
    check_profile_dims(a, profile)?;
    let perm = ascending_sort_permutation(a)?;
    let mu = profile.mu();
    let mut out = vec![0.0; a.len()];
    for (j, &pos) in perm.indices().iter().enumerate() {
        out[pos] = mu[j];
    }
    Ok(out)
}

/// One-sided variant shifting only ranks whose activation lies above the
/// reference: at rank j the output is `min(a[pi(j)], mu[j])`.
pub fn apply_ras_inhibit(a: &[f64], profile: &ReferenceProfile) -> Result<Vec<f64>> {
    check_profile_dims(a, profile)?;
    let perm = ascending_sort_permutation(a)?;
    let mu = profile.mu();
    let mut out = vec![0.0; a.len()];
    for (j, &pos) in perm.indices().iter().enumerate() {
        out[pos] = a[pos].min(mu[j]);
    }
    Ok(out)
}

/// One-sided variant shifting only ranks below the reference:
/// `max(a[pi(j)], mu[j])`.
pub fn apply_ras_excite(a: &[f64], profile: &ReferenceProfile) -> Result<Vec<f64>> {
    check_profile_dims(a, profile)?;
    let perm = ascending_sort_permutation(a)?;
    let mu = profile.mu();
    let mut out = vec![0.0; a.len()];
    for (j, &pos) in perm.indices().iter().enumerate() {
        out[pos] = a[pos].max(mu[j]);
    }
    Ok(out)
}

/// Elementwise clipping at a fixed threshold.
pub fn apply_react(a: &[f64], c: f64) -> Result<Vec<f64>> {
    if a.iter().any(|v| !v.is_finite()) || !c.is_finite() {
        return Err(OodError::NonFiniteInput("react"));
    }
    Ok(a.iter().map(|&v| v.min(c)).collect())
}

/// The clipping threshold: percentile of all N*D pooled ID training values.
pub fn calibrate_react(id_train: &ActivationSet, p: f64) -> Result<f64> {
    percentile(id_train.data(), p)
}

/// Split of an activation vector at its p-th percentile.
#[derive(Debug, Clone, PartialEq)]
pub struct AshSplit {
    /// Indices with a_j strictly above the threshold.
    pub kept: Vec<usize>,
    /// Indices at or below the threshold.
    pub pruned: Vec<usize>,
    /// Full sum of the vector.
    pub q: f64,
    /// Sum over kept entries.
    pub q_p: f64,
    /// The percentile threshold itself.
    pub threshold: f64,
}

/// Splits `a` at its p-th percentile. The kept set uses strict inequality, so
/// an all-ties vector keeps nothing for any p.
pub fn ash_split(a: &[f64], p: f64) -> Result<AshSplit> {
    if !(0.0..100.0).contains(&p) {
        return Err(OodError::BadPercentile(p));
    }
    let threshold = percentile(a, p)?;
    let mut kept = Vec::new();
    let mut pruned = Vec::new();
    let mut q = 0.0;
    let mut q_p = 0.0;
    for (j, &v) in a.iter().enumerate() {
        q += v;
        if v > threshold {
            kept.push(j);
            q_p += v;
        } else {
            pruned.push(j);
        }
    }
    Ok(AshSplit {
        kept,
        pruned,
        q,
        q_p,
        threshold,
    })
}

/// The scaling exponent r = Q / Q_p. With rectified inputs r >= 1; without
/// rectification it is unconstrained, which is surfaced by the diagnostics
/// rather than guarded here.
pub fn scale_exponent(a: &[f64], p: f64) -> Result<f64> {
    let split = ash_split(a, p)?;
    if split.q_p == 0.0 {
        return Err(OodError::DegenerateSplit("scale exponent"));
    }
    Ok(split.q / split.q_p)
}

/// Prune: entries at or below the percentile threshold become zero, kept
/// entries pass through bitwise.
pub fn apply_ash_p(a: &[f64], p: f64) -> Result<Vec<f64>> {
    let split = ash_split(a, p)?;
    let mut out = vec![0.0; a.len()];
    for &j in &split.kept {
        out[j] = a[j];
    }
    Ok(out)
}

/// Prune and binarize: kept entries all become Q / |kept|, spreading the
/// pre-edit mass evenly over the survivors.
pub fn apply_ash_b(a: &[f64], p: f64) -> Result<Vec<f64>> {
    let split = ash_split(a, p)?;
    if split.kept.is_empty() {
        return Err(OodError::DegenerateSplit("ash-b"));
    }
    let fill = split.q / split.kept.len() as f64;
    let mut out = vec![0.0; a.len()];
    for &j in &split.kept {
        out[j] = fill;
    }
    Ok(out)
}

/// Prune and scale: kept entries are multiplied by e^(Q/Q_p).
pub fn apply_ash_s(a: &[f64], p: f64) -> Result<Vec<f64>> {
    let split = ash_split(a, p)?;
    if split.kept.is_empty() || split.q_p == 0.0 {
        return Err(OodError::DegenerateSplit("ash-s"));
    }
    let factor = (split.q / split.q_p).exp();
    let mut out = vec![0.0; a.len()];
    for &j in &split.kept {
        out[j] = a[j] * factor;
    }
    Ok(out)
}

/// Uniform scaling of the whole vector by e^(Q/Q_p), no pruning. The exponent
/// is deliberately not clamped: with unrectified inputs it may drop below 1
/// or go negative, and that behavior is part of what the diagnostics report.
pub fn apply_scale(a: &[f64], p: f64) -> Result<Vec<f64>> {
    let r = scale_exponent(a, p)?;
    let factor = r.exp();
    Ok(a.iter().map(|&v| v * factor).collect())
}

/// Per-class boolean keep-mask over head weights.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiceMask {
    keep: Vec<bool>,
    classes: usize,
    dims: usize,
}

impl DiceMask {
    pub fn new(keep: Vec<bool>, classes: usize, dims: usize) -> Result<Self> {
        if keep.len() != classes * dims {
            return Err(OodError::DimensionMismatch {
                context: "dice mask",
                expected: classes * dims,
                got: keep.len(),
            });
        }
        Ok(DiceMask {
            keep,
            classes,
            dims,
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    #[inline]
    pub fn keep(&self, c: usize, j: usize) -> bool {
        self.keep[c * self.dims + j]
    }

    pub fn kept_per_class(&self) -> Vec<usize> {
        (0..self.classes)
            .map(|c| (0..self.dims).filter(|&j| self.keep(c, j)).count())
            .collect()
    }
}

/// Ranks the contribution `V[c][j] = W[c][j] * mean_i(a_i[j])` per class and
/// keeps the top ceil((100 - p)/100 * D) entries, ties broken by lower
/// feature index.
pub fn calibrate_dice(
    id_train: &ActivationSet,
    head: &LinearHead,
    sparsity_p: f64,
) -> Result<DiceMask> {
    if !(0.0..=100.0).contains(&sparsity_p) {
        return Err(OodError::BadPercentile(sparsity_p));
    }
    let d = head.dims();
    if id_train.n_dims() != d {
        return Err(OodError::DimensionMismatch {
            context: "dice calibration",
            expected: d,
            got: id_train.n_dims(),
        });
    }
    let n = id_train.n_samples() as f64;
    let mut mean = vec![0.0f64; d];
    for row in id_train.rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }

    let keep_count = (((100.0 - sparsity_p) / 100.0) * d as f64).ceil() as usize;
    let keep_count = keep_count.min(d);
    let mut keep = vec![false; head.classes() * d];
    for c in 0..head.classes() {
        let w = head.weight_row(c);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&i, &j| {
            let vi = w[i] * mean[i];
            let vj = w[j] * mean[j];
            vj.partial_cmp(&vi).unwrap().then(i.cmp(&j))
        });
        for &j in order.iter().take(keep_count) {
            keep[c * d + j] = true;
        }
    }
    DiceMask::new(keep, head.classes(), d)
}

/// Sparsified forward pass: `z[c] = sum_j mask[c][j] * W[c][j] * a_j + b[c]`.
/// Accumulation order matches the plain head so a full mask reproduces it
/// bitwise. Unlike the other transforms this edits the head, not the
/// activations, and returns logits directly.
pub fn apply_dice(a: &[f64], head: &LinearHead, mask: &DiceMask) -> Result<Vec<f64>> {
    if a.len() != head.dims() {
        return Err(OodError::DimensionMismatch {
            context: "dice forward",
            expected: head.dims(),
            got: a.len(),
        });
    }
    if mask.classes() != head.classes() || mask.dims() != head.dims() {
        return Err(OodError::DimensionMismatch {
            context: "dice mask vs head",
            expected: head.classes() * head.dims(),
            got: mask.classes() * mask.dims(),
        });
    }
    let mut z = Vec::with_capacity(head.classes());
    for c in 0..head.classes() {
        let row = head.weight_row(c);
        let mut acc = 0.0;
        for j in 0..head.dims() {
            if mask.keep(c, j) {
                acc += row[j] * a[j];
            }
        }
        z.push(acc + head.bias()[c]);
    }
    Ok(z)
}

/// Rescales `a` to the target l2 norm.
pub fn apply_l2norm(a: &[f64], target_norm: f64) -> Result<Vec<f64>> {
    if !(target_norm > 0.0 && target_norm.is_finite()) {
        return Err(OodError::BadParameter(format!(
            "l2 target norm must be positive and finite, got {target_norm}"
        )));
    }
    let norm = l2_norm(a);
    if norm == 0.0 {
        return Err(OodError::ZeroVector("l2 normalization"));
    }
    Ok(a.iter().map(|&v| v * target_norm / norm).collect())
}

/// Enhancer selection plus everything it needs at apply time. Calibration
/// artifacts (profile, threshold, mask, target norm) are embedded so a spec
/// is immutable and self-contained once built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EnhancerKind {
    Ras,
    RasInhibit,
    RasExcite,
    React,
    AshP,
    AshB,
    AshS,
    Scale,
    Dice,
    L2Norm,
    Identity,
}

impl EnhancerKind {
    pub fn name(self) -> &'static str {
        match self {
            EnhancerKind::Ras => "ras",
            EnhancerKind::RasInhibit => "ras_inhibit",
            EnhancerKind::RasExcite => "ras_excite",
            EnhancerKind::React => "react",
            EnhancerKind::AshP => "ash_p",
            EnhancerKind::AshB => "ash_b",
            EnhancerKind::AshS => "ash_s",
            EnhancerKind::Scale => "scale",
            EnhancerKind::Dice => "dice",
            EnhancerKind::L2Norm => "l2norm",
            EnhancerKind::Identity => "identity",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Ok(match name {
            "ras" => EnhancerKind::Ras,
            "ras_inhibit" => EnhancerKind::RasInhibit,
            "ras_excite" => EnhancerKind::RasExcite,
            "react" => EnhancerKind::React,
            "ash_p" => EnhancerKind::AshP,
            "ash_b" => EnhancerKind::AshB,
            "ash_s" => EnhancerKind::AshS,
            "scale" => EnhancerKind::Scale,
            "dice" => EnhancerKind::Dice,
            "l2norm" => EnhancerKind::L2Norm,
            "identity" => EnhancerKind::Identity,
            other => {
                return Err(OodError::BadParameter(format!(
                    "unknown enhancer `{other}`"
                )))
            }
        })
    }

    fn is_ras_family(self) -> bool {
        matches!(
            self,
            EnhancerKind::Ras | EnhancerKind::RasInhibit | EnhancerKind::RasExcite
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnhancerSpec {
    pub kind: EnhancerKind,
    pub percentile_p: Option<f64>,
    pub profile: Option<ReferenceProfile>,
    pub react_threshold_c: Option<f64>,
    pub dice_mask: Option<DiceMask>,
    pub l2_target: Option<f64>,
}

impl EnhancerSpec {
    pub fn identity() -> Self {
        EnhancerSpec {
            kind: EnhancerKind::Identity,
            percentile_p: None,
            profile: None,
            react_threshold_c: None,
            dice_mask: None,
            l2_target: None,
        }
    }

    pub fn ras(profile: ReferenceProfile) -> Self {
        EnhancerSpec {
            kind: EnhancerKind::Ras,
            profile: Some(profile),
            ..EnhancerSpec::identity()
        }
    }

    pub fn ras_inhibit(profile: ReferenceProfile) -> Self {
        EnhancerSpec {
            kind: EnhancerKind::RasInhibit,
            profile: Some(profile),
            ..EnhancerSpec::identity()
        }
    }

    pub fn ras_excite(profile: ReferenceProfile) -> Self {
        EnhancerSpec {
            kind: EnhancerKind::RasExcite,
            profile: Some(profile),
            ..EnhancerSpec::identity()
        }
    }

    pub fn react(threshold_c: f64) -> Self {
        EnhancerSpec {
            kind: EnhancerKind::React,
            react_threshold_c: Some(threshold_c),
            ..EnhancerSpec::identity()
        }
    }

    pub fn ash_p(p: f64) -> Self {
        EnhancerSpec {
            kind: EnhancerKind::AshP,
            percentile_p: Some(p),
            ..EnhancerSpec::identity()
        }
    }

    pub fn ash_b(p: f64) -> Self {
        EnhancerSpec {
            kind: EnhancerKind::AshB,
            percentile_p: Some(p),
            ..EnhancerSpec::identity()
        }
    }

    pub fn ash_s(p: f64) -> Self {
        EnhancerSpec {
            kind: EnhancerKind::AshS,
            percentile_p: Some(p),
            ..EnhancerSpec::identity()
        }
    }

    pub fn scale(p: f64) -> Self {
        EnhancerSpec {
            kind: EnhancerKind::Scale,
            percentile_p: Some(p),
            ..EnhancerSpec::identity()
        }
    }

    pub fn dice(mask: DiceMask) -> Self {
        EnhancerSpec {
            kind: EnhancerKind::Dice,
            dice_mask: Some(mask),
            ..EnhancerSpec::identity()
        }
    }

    pub fn l2norm(target: f64) -> Self {
        EnhancerSpec {
            kind: EnhancerKind::L2Norm,
            l2_target: Some(target),
            ..EnhancerSpec::identity()
        }
    }

    /// Checks the presence-iff-kind invariants.
    pub fn validate(&self) -> Result<()> {
        if self.kind.is_ras_family() != self.profile.is_some() {
            return Err(OodError::BadParameter(
                "profile must be present exactly for the rank-shift family".into(),
            ));
        }
        if (self.kind == EnhancerKind::React) != self.react_threshold_c.is_some() {
            return Err(OodError::BadParameter(
                "react_threshold_c must be present exactly for react".into(),
            ));
        }
        if (self.kind == EnhancerKind::Dice) != self.dice_mask.is_some() {
            return Err(OodError::BadParameter(
                "dice_mask must be present exactly for dice".into(),
            ));
        }
        let needs_percentile = matches!(
            self.kind,
            EnhancerKind::AshP | EnhancerKind::AshB | EnhancerKind::AshS | EnhancerKind::Scale
        );
        if needs_percentile {
            match self.percentile_p {
                Some(p) if (0.0..=100.0).contains(&p) => {}
                Some(p) => return Err(OodError::BadPercentile(p)),
                None => {
                    return Err(OodError::BadParameter(
                        "percentile_p required for ash/scale".into(),
                    ))
                }
            }
        }
        if self.kind == EnhancerKind::L2Norm && self.l2_target.is_none() {
            return Err(OodError::BadParameter(
                "l2_target required for l2norm".into(),
            ));
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    /// key=value lines describing this spec (the profile and mask persist
    /// separately and are referenced by path at the config level).
    pub fn config_entries(&self) -> Vec<(String, String)> {
        let mut out = vec![("kind".to_string(), self.kind.name().to_string())];
        if let Some(p) = self.percentile_p {
            out.push(("percentile_p".into(), p.to_string()));
        }
        if let Some(c) = self.react_threshold_c {
            out.push(("react_threshold_c".into(), c.to_string()));
        }
        if let Some(t) = self.l2_target {
            out.push(("l2_target".into(), t.to_string()));
        }
        out
    }

    /// Applies the activation edit. DICE and IDENTITY leave features
    /// untouched (DICE edits the head instead).
    pub fn enhance(&self, a: &[f64]) -> Result<Vec<f64>> {
        self.validate()?;
        match self.kind {
            EnhancerKind::Identity | EnhancerKind::Dice => Ok(a.to_vec()),
            EnhancerKind::Ras => apply_ras(a, self.profile.as_ref().unwrap()),
            EnhancerKind::RasInhibit => apply_ras_inhibit(a, self.profile.as_ref().unwrap()),
            EnhancerKind::RasExcite => apply_ras_excite(a, self.profile.as_ref().unwrap()),
            EnhancerKind::React => apply_react(a, self.react_threshold_c.unwrap()),
            EnhancerKind::AshP => apply_ash_p(a, self.percentile_p.unwrap()),
            EnhancerKind::AshB => apply_ash_b(a, self.percentile_p.unwrap()),
            EnhancerKind::AshS => apply_ash_s(a, self.percentile_p.unwrap()),
            EnhancerKind::Scale => apply_scale(a, self.percentile_p.unwrap()),
            EnhancerKind::L2Norm => apply_l2norm(a, self.l2_target.unwrap()),
        }
    }
}

/// Enhancer then head: z = W a_edited + b, with DICE fusing the edit into the
/// matrix product.
pub fn forward(a: &[f64], head: &LinearHead, enhancer: &EnhancerSpec) -> Result<Vec<f64>> {
    enhancer.validate()?;
    match enhancer.kind {
        EnhancerKind::Dice => apply_dice(a, head, enhancer.dice_mask.as_ref().unwrap()),
        _ => head.logits(&enhancer.enhance(a)?),
    }
}

/// (edited features, logits) for one sample; the features feed distance
/// scorers, the logits feed logit scorers.
pub fn forward_features(
    a: &[f64],
    head: &LinearHead,
    enhancer: &EnhancerSpec,
) -> Result<(Vec<f64>, Vec<f64>)> {
    enhancer.validate()?;
    match enhancer.kind {
        EnhancerKind::Dice => {
            let z = apply_dice(a, head, enhancer.dice_mask.as_ref().unwrap())?;
            Ok((a.to_vec(), z))
        }
        _ => {
            let f = enhancer.enhance(a)?;
            let z = head.logits(&f)?;
            Ok((f, z))
        }
    }
}

/// Batch forward over a whole set; rows are independent and the output order
/// matches the input order for any worker count.
pub fn forward_set(
    set: &ActivationSet,
    head: &LinearHead,
    enhancer: &EnhancerSpec,
) -> Result<Vec<Vec<f64>>> {
    enhancer.validate()?;
    exec::map_indexed(set.n_samples(), |i| forward(set.row(i), head, enhancer))
        .into_iter()
        .collect()
}

/// Batch activation edit preserving labels and tag.
pub fn enhance_set(set: &ActivationSet, enhancer: &EnhancerSpec) -> Result<ActivationSet> {
    enhancer.validate()?;
    let rows: Result<Vec<Vec<f64>>> =
        exec::map_indexed(set.n_samples(), |i| enhancer.enhance(set.row(i)))
            .into_iter()
            .collect();
    let rows = rows?;
    let mut out = ActivationSet::from_rows(&rows, set.tag())?;
    if let Some(labels) = set.labels() {
        out = out.with_labels(labels.to_vec())?;
    }
    Ok(out)
}
