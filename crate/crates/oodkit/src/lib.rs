//! Post-hoc out-of-distribution detection toolkit.
//!
//! Operates entirely on extracted activation vectors plus a linear
//! classification head: no backbones, no training. The pieces:
//!
//! * [`types`] / [`numeric`] - domain types and the elementary kernels
//!   (stable sort permutations, interpolated percentiles, log-sum-exp).
//! * [`dumpio`] - the `OODA` binary dump format, CSV surfaces and the
//!   `key=value` config grammar.
//! * [`enhancers`] - activation edits applied before the head: the
//!   rank-shift family (full / inhibit / excite), clipping, prune/scale
//!   splits, head sparsification and l2 normalization.
//! * [`scorers`] - energy, softmax, generalized-entropy, Mahalanobis
//!   (plain and relative) and virtual-logit scoring; higher = more ID.
//! * [`metrics`] - AUROC / AUPR / FPR@TPR with exact brute-force oracles,
//!   the threshold detector and accuracy deltas.
//! * [`analysis`] - Gamma(p) curves, the mean/std-ratio condition, ranked
//!   residual profiles, scaling-exponent diagnostics and the energy-score
//!   ablation harness.
//! * [`synthlab`] - seeded synthetic populations, class clouds and a toy
//!   multi-layer network for layer-edit experiments.
//! * [`cli`] - the `oodkit` command-line surface over all of the above.
//!
//! With the default `parallel` feature, batch operations fan out over rows
//! via rayon; outputs are identical to the sequential build.

pub mod analysis;
pub mod cli;
pub mod dumpio;
pub mod enhancers;
pub mod error;
mod exec;
pub mod linalg;
pub mod metrics;
pub mod numeric;
pub mod scorers;
pub mod synthlab;
pub mod types;

pub use error::{OodError, Result};
pub use types::{ActivationSet, DistributionTag, LinearHead, Permutation, ReferenceProfile, ScoreSet};
