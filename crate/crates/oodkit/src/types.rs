//! Domain types shared by every module: activation sets, reference profiles,
//! linear heads, score sets and permutations.
//!
//! All types validate their invariants on construction and are immutable
//! afterwards, so they can be shared freely across worker threads.

use crate::error::{OodError, Result};

/// Distribution provenance of an activation set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistributionTag {
    IdTrain,
    IdTest,
    Ood,
}

impl DistributionTag {
    pub fn as_byte(self) -> u8 {
        match self {
            DistributionTag::IdTrain => 0,
            DistributionTag::IdTest => 1,
            DistributionTag::Ood => 2,
        }
    }

    pub fn from_byte(b: u8) -> Result<Self> {
        match b {
            0 => Ok(DistributionTag::IdTrain),
            1 => Ok(DistributionTag::IdTest),
            2 => Ok(DistributionTag::Ood),
            other => Err(OodError::BadParameter(format!(
                "unknown distribution tag byte {other}"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DistributionTag::IdTrain => "id_train",
            DistributionTag::IdTest => "id_test",
            DistributionTag::Ood => "ood",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "id_train" => Ok(DistributionTag::IdTrain),
            "id_test" => Ok(DistributionTag::IdTest),
            "ood" => Ok(DistributionTag::Ood),
            other => Err(OodError::BadParameter(format!(
                "unknown distribution tag `{other}` (expected id_train, id_test or ood)"
            ))),
        }
    }

    /// True for both ID tags, false for OoD.
    pub fn is_id(self) -> bool {
        !matches!(self, DistributionTag::Ood)
    }
}

/// An N x D matrix of activation vectors with optional class labels and a
/// distribution tag. Row-major, 64-bit floats internally regardless of the
/// on-disk precision.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationSet {
    data: Vec<f64>,
    n: usize,
    d: usize,
    labels: Option<Vec<u32>>,
    tag: Option<DistributionTag>,
}

impl ActivationSet {
    pub fn new(
        data: Vec<f64>,
        n: usize,
        d: usize,
        labels: Option<Vec<u32>>,
        tag: Option<DistributionTag>,
    ) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(OodError::EmptyInput("activation set"));
        }
        if data.len() != n * d {
            return Err(OodError::DimensionMismatch {
                context: "activation set payload",
                expected: n * d,
                got: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(OodError::NonFiniteInput("activation set"));
        }
        if let Some(ref l) = labels {
            if l.len() != n {
                return Err(OodError::DimensionMismatch {
                    context: "label vector",
                    expected: n,
                    got: l.len(),
                });
            }
        }
        Ok(ActivationSet {
            data,
            n,
            d,
            labels,
            tag,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], tag: Option<DistributionTag>) -> Result<Self> {
        if rows.is_empty() {
            return Err(OodError::EmptyInput("activation set"));
        }
        let d = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * d);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != d {
                return Err(OodError::DimensionMismatch {
                    context: "activation set row",
                    expected: d,
                    got: rows[i].len(),
                });
            }
            data.extend_from_slice(r);
        }
        ActivationSet::new(data, rows.len(), d, None, tag)
    }

    pub fn n_samples(&self) -> usize {
        self.n
    }

    pub fn n_dims(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.d)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn labels(&self) -> Option<&[u32]> {
        self.labels.as_deref()
    }

    pub fn tag(&self) -> Option<DistributionTag> {
        self.tag
    }

    pub fn with_tag(mut self, tag: DistributionTag) -> Self {
        self.tag = Some(tag);
        self
    }

    pub fn with_labels(mut self, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != self.n {
            return Err(OodError::DimensionMismatch {
                context: "label vector",
                expected: self.n,
                got: labels.len(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    /// FNV-1a digest over shape, payload, labels and tag. Used as provenance
    /// metadata on derived artifacts such as reference profiles.
    pub fn checksum64(&self) -> u64 {
        const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
        const PRIME: u64 = 0x100_0000_01b3;
        let mut h = OFFSET;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= u64::from(b);
                h = h.wrapping_mul(PRIME);
            }
        };
        eat(&(self.n as u64).to_le_bytes());
        eat(&(self.d as u64).to_le_bytes());
        for v in &self.data {
            eat(&v.to_le_bytes());
        }
        if let Some(ref labels) = self.labels {
            for l in labels {
                eat(&l.to_le_bytes());
            }
        }
        eat(&[self.tag.map_or(0xff, DistributionTag::as_byte)]);
        h
    }
}

/// Sorted mean activation vector plus provenance metadata. `mu` is always
/// non-decreasing because it is a mean of ascending-sorted vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceProfile {
    mu: Vec<f64>,
    count: usize,
    source_checksum: u64,
}

impl ReferenceProfile {
    pub fn new(mu: Vec<f64>, count: usize, source_checksum: u64) -> Result<Self> {
        if mu.is_empty() {
            return Err(OodError::EmptyInput("reference profile"));
        }
        if count == 0 {
            return Err(OodError::BadParameter(
                "reference profile count must be >= 1".into(),
            ));
        }
        if mu.iter().any(|v| !v.is_finite()) {
            return Err(OodError::NonFiniteInput("reference profile"));
        }
        if mu.windows(2).any(|w| w[0] > w[1]) {
            return Err(OodError::BadParameter(
                "reference profile must be non-decreasing".into(),
            ));
        }
        Ok(ReferenceProfile {
            mu,
            count,
            source_checksum,
        })
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn source_checksum(&self) -> u64 {
        self.source_checksum
    }
}

/// A C x D weight matrix and C biases mapping activation vectors to logits.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearHead {
    weights: Vec<f64>,
    classes: usize,
    dims: usize,
    bias: Vec<f64>,
    class_names: Option<Vec<String>>,
}

impl LinearHead {
    pub fn new(
        weights: Vec<f64>,
        classes: usize,
        dims: usize,
        bias: Vec<f64>,
        class_names: Option<Vec<String>>,
    ) -> Result<Self> {
        if classes < 2 {
            return Err(OodError::BadParameter(
                "linear head needs at least 2 classes".into(),
            ));
        }
        if dims == 0 {
            return Err(OodError::EmptyInput("linear head"));
        }
        if weights.len() != classes * dims {
            return Err(OodError::DimensionMismatch {
                context: "head weights",
                expected: classes * dims,
                got: weights.len(),
            });
        }
        if bias.len() != classes {
            return Err(OodError::DimensionMismatch {
                context: "head bias",
                expected: classes,
                got: bias.len(),
            });
        }
        if weights.iter().chain(bias.iter()).any(|v| !v.is_finite()) {
            return Err(OodError::NonFiniteInput("linear head"));
        }
        if let Some(ref names) = class_names {
            if names.len() != classes {
                return Err(OodError::DimensionMismatch {
                    context: "class names",
                    expected: classes,
                    got: names.len(),
                });
            }
        }
        Ok(LinearHead {
            weights,
            classes,
            dims,
            bias,
            class_names,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], bias: Vec<f64>) -> Result<Self> {
        let classes = rows.len();
        let dims = rows.first().map_or(0, Vec::len);
        let mut weights = Vec::with_capacity(classes * dims);
        for r in rows {
            if r.len() != dims {
                return Err(OodError::DimensionMismatch {
                    context: "head weight row",
                    expected: dims,
                    got: r.len(),
                });
            }
            weights.extend_from_slice(r);
        }
        LinearHead::new(weights, classes, dims, bias, None)
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn weight_row(&self, c: usize) -> &[f64] {
        &self.weights[c * self.dims..(c + 1) * self.dims]
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn class_names(&self) -> Option<&[String]> {
        self.class_names.as_deref()
    }

    /// z = W a + b. Accumulates over features in ascending index order so that
    /// masked variants can reproduce the pass bit-exactly.
    pub fn logits(&self, a: &[f64]) -> Result<Vec<f64>> {
        if a.len() != self.dims {
            return Err(OodError::DimensionMismatch {
                context: "head forward",
                expected: self.dims,
                got: a.len(),
            });
        }
        let mut z = Vec::with_capacity(self.classes);
        for c in 0..self.classes {
            let row = self.weight_row(c);
            let mut acc = 0.0;
            for j in 0..self.dims {
                acc += row[j] * a[j];
            }
            z.push(acc + self.bias[c]);
        }
        Ok(z)
    }

    /// Checks that every label indexes a valid class.
    pub fn check_labels(&self, set: &ActivationSet) -> Result<()> {
        let labels = set.labels().ok_or(OodError::MissingLabels)?;
        for &l in labels {
            if l as usize >= self.classes {
                return Err(OodError::BadParameter(format!(
                    "label {l} out of range for {} classes",
                    self.classes
                )));
            }
        }
        Ok(())
    }
}

/// Per-sample scalar scores with ID/OoD ground truth. Higher score = more ID.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    scores: Vec<f64>,
    is_id: Vec<bool>,
}

impl ScoreSet {
    pub fn new(scores: Vec<f64>, is_id: Vec<bool>) -> Result<Self> {
        if scores.is_empty() {
            return Err(OodError::EmptyInput("score set"));
        }
        if scores.len() != is_id.len() {
            return Err(OodError::DimensionMismatch {
                context: "score set",
                expected: scores.len(),
                got: is_id.len(),
            });
        }
        if scores.iter().any(|v| !v.is_finite()) {
            return Err(OodError::NonFiniteInput("score set"));
        }
        Ok(ScoreSet { scores, is_id })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn is_id(&self) -> &[bool] {
        &self.is_id
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn n_id(&self) -> usize {
        self.is_id.iter().filter(|&&b| b).count()
    }

    pub fn n_ood(&self) -> usize {
        self.len() - self.n_id()
    }

    /// Concatenates several score sets (e.g. ID scores plus one OoD set).
    pub fn concat(parts: &[&ScoreSet]) -> Result<Self> {
        let mut scores = Vec::new();
        let mut is_id = Vec::new();
        for p in parts {
            scores.extend_from_slice(&p.scores);
            is_id.extend_from_slice(&p.is_id);
        }
        ScoreSet::new(scores, is_id)
    }

    /// Same scores with the ID/OoD ground truth inverted.
    pub fn flipped(&self) -> ScoreSet {
        ScoreSet {
            scores: self.scores.clone(),
            is_id: self.is_id.iter().map(|b| !b).collect(),
        }
    }
}

/// A bijection on [0, D).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation {
    indices: Vec<usize>,
}

impl Permutation {
    pub fn new(indices: Vec<usize>) -> Result<Self> {
        let d = indices.len();
        if d == 0 {
            return Err(OodError::EmptyInput("permutation"));
        }
        let mut seen = vec![false; d];
        for &i in &indices {
            if i >= d || seen[i] {
                return Err(OodError::BadParameter(
                    "permutation indices must form a bijection on [0, D)".into(),
                ));
            }
            seen[i] = true;
        }
        Ok(Permutation { indices })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn activation_set_rejects_nan() {
        let err = ActivationSet::new(vec![0.0, f64::NAN], 1, 2, None, None);
        assert!(matches!(err, Err(OodError::NonFiniteInput(_))));
    }

    #[test]
    fn activation_set_rejects_bad_label_len() {
        let err = ActivationSet::new(vec![0.0, 1.0], 2, 1, Some(vec![0]), None);
        assert!(matches!(err, Err(OodError::DimensionMismatch { .. })));
    }

    #[test]
    fn profile_requires_sorted_mu() {
        assert!(ReferenceProfile::new(vec![1.0, 0.5], 1, 0).is_err());
        assert!(ReferenceProfile::new(vec![0.5, 0.5, 1.0], 3, 0).is_ok());
    }

    #[test]
    fn head_logits_hand_case() {
        let head = LinearHead::from_rows(
            &[vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![0.5, -0.5],
        )
        .unwrap();
        assert_eq!(head.logits(&[2.0, 3.0]).unwrap(), vec![2.5, 2.5]);
    }

    #[test]
    fn head_needs_two_classes() {
        assert!(LinearHead::from_rows(&[vec![1.0]], vec![0.0]).is_err());
    }

    #[test]
    fn permutation_rejects_duplicates() {
        assert!(Permutation::new(vec![0, 0, 1]).is_err());
        assert!(Permutation::new(vec![2, 0, 1]).is_ok());
    }

    #[test]
    fn checksum_changes_with_tag() {
        let a = ActivationSet::new(vec![1.0, 2.0], 1, 2, None, None).unwrap();
        let b = a.clone().with_tag(DistributionTag::Ood);
        assert_ne!(a.checksum64(), b.checksum64());
    }
}
