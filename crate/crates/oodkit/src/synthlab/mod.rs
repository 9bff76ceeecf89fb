//! Synthetic data generation and the toy network.
//!
//! Rectified/unrectified Gaussian activation populations model the two
//! penultimate-layer regimes; class-structured feature clouds with a
//! nearest-mean head give a desk-scale stand-in for ID feature space. All
//! generation is seed-partitioned per sample index (see [`rng`]), so parallel
//! fills are bit-identical to serial ones.

pub mod rng;
pub mod toynet;

pub use rng::{stream_seed, SplitMix64, Xoshiro256pp};
pub use toynet::{
    gelu_approx, random_linear_head, read_toy_network, write_toy_network, Activation, ToyLayer,
    ToyNetwork, GELU_CUBIC_COEFF, GELU_SQRT_2_OVER_PI,
};

use crate::error::{OodError, Result};
use crate::exec;
use crate::types::{ActivationSet, DistributionTag, LinearHead};

// domain-separation constants for independent streams under one seed
pub(crate) const DOMAIN_RECT: u64 = 1;
pub(crate) const DOMAIN_CLOUD_MEANS: u64 = 2;
pub(crate) const DOMAIN_CLOUD_NOISE: u64 = 3;
pub(crate) const DOMAIN_HEAD: u64 = 4;

/// Specification of a (possibly rectified) Gaussian activation population.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RectGaussSpec {
    pub mu: f64,
    pub sigma: f64,
    pub dim: usize,
    pub n: usize,
    pub rectified: bool,
    pub seed: u64,
}

impl RectGaussSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(OodError::BadParameter(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        if !self.mu.is_finite() {
            return Err(OodError::NonFiniteInput("rect gauss spec"));
        }
        if self.dim == 0 || self.n == 0 {
            return Err(OodError::EmptyInput("rect gauss spec"));
        }
        Ok(())
    }
}

/// Draws n x D entries from N(mu, sigma^2), clamped at zero when rectified.
pub fn sample_rect_gauss(spec: &RectGaussSpec) -> Result<ActivationSet> {
    spec.validate()?;
    let rows = exec::map_indexed(spec.n, |i| {
        let mut rng = Xoshiro256pp::from_seed(stream_seed(spec.seed, DOMAIN_RECT, i as u64));
        let mut row = vec![0.0; spec.dim];
        rng.fill_gaussian(&mut row);
        for v in &mut row {
            *v = spec.mu + spec.sigma * *v;
            if spec.rectified {
                *v = v.max(0.0);
            }
        }
        row
    });
    ActivationSet::from_rows(&rows, None)
}

/// Keeps a contiguous slice of feature dimensions from every sample. This is
/// how token-style selection is represented over flat activation vectors
/// (e.g. keeping the dims of one designated token from a captured layer);
/// untested against real transformer dumps.
pub fn capture_slice(set: &ActivationSet, start: usize, len: usize) -> Result<ActivationSet> {
    if len == 0 || start + len > set.n_dims() {
        return Err(OodError::BadParameter(format!(
            "slice [{start}, {}) out of range for {} dims",
            start + len,
            set.n_dims()
        )));
    }
    let rows: Vec<Vec<f64>> = (0..set.n_samples())
        .map(|i| set.row(i)[start..start + len].to_vec())
        .collect();
    let mut out = ActivationSet::from_rows(&rows, set.tag())?;
    if let Some(labels) = set.labels() {
        out = out.with_labels(labels.to_vec())?;
    }
    Ok(out)
}

/// Class-structured Gaussian clouds plus the matching nearest-mean linear
/// head (W rows = 2 m_c, b_c = -|m_c|^2), which classifies by smallest
/// distance to a class mean. Labels are blocked per class; unit noise.
pub fn sample_class_clouds(
    classes: usize,
    dim: usize,
    n_per_class: usize,
    mean_scale: f64,
    seed: u64,
) -> Result<(ActivationSet, LinearHead)> {
    if classes < 2 {
        return Err(OodError::BadParameter(
            "class clouds need at least 2 classes".into(),
        ));
    }
    if dim == 0 || n_per_class == 0 {
        return Err(OodError::EmptyInput("class clouds"));
    }
    if !(mean_scale.is_finite() && mean_scale > 0.0) {
        return Err(OodError::BadParameter(format!(
            "mean scale must be positive, got {mean_scale}"
        )));
    }

    // class means on the sphere of radius mean_scale
    let mut means = Vec::with_capacity(classes);
    for c in 0..classes {
        let mut rng = Xoshiro256pp::from_seed(stream_seed(seed, DOMAIN_CLOUD_MEANS, c as u64));
        let mut dir = vec![0.0; dim];
        rng.fill_gaussian(&mut dir);
        let norm = crate::numeric::l2_norm(&dir);
        if norm == 0.0 {
            dir[0] = 1.0;
        }
        let norm = crate::numeric::l2_norm(&dir);
        for v in &mut dir {
            *v *= mean_scale / norm;
        }
        means.push(dir);
    }

    let n = classes * n_per_class;
    let rows = exec::map_indexed(n, |i| {
        let class = i / n_per_class;
        let mut rng = Xoshiro256pp::from_seed(stream_seed(seed, DOMAIN_CLOUD_NOISE, i as u64));
        let mut row = vec![0.0; dim];
        rng.fill_gaussian(&mut row);
        for (v, m) in row.iter_mut().zip(&means[class]) {
            *v += m;
        }
        row
    });
    let labels: Vec<u32> = (0..n).map(|i| (i / n_per_class) as u32).collect();
    let set = ActivationSet::from_rows(&rows, Some(DistributionTag::IdTrain))?
        .with_labels(labels)?;

    let mut weights = Vec::with_capacity(classes * dim);
    let mut bias = Vec::with_capacity(classes);
    for m in &means {
        weights.extend(m.iter().map(|v| 2.0 * v));
        bias.push(-m.iter().map(|v| v * v).sum::<f64>());
    }
    let head = LinearHead::new(weights, classes, dim, bias, None)?;
    Ok((set, head))
}
