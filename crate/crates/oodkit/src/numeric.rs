//! Elementary numeric kernels: stable sort permutations, interpolated
//! percentiles and overflow-safe log-sum-exp.
//!
//! Everything here is a pure function over 64-bit floats. The sort is stable
//! with ties broken by ascending original index, which makes every rank-based
//! transform in the toolkit deterministic and idempotent.

use crate::error::{OodError, Result};
use crate::types::Permutation;

/// Order-preserving map from finite f64 to u64: key(x) < key(y) iff x < y,
/// with -0.0 normalized so the two zeros stay numeric ties.
#[inline]
fn monotone_key(v: f64) -> u64 {
    let v = if v == 0.0 { 0.0 } else { v };
    let b = v.to_bits();
    if b >> 63 == 0 {
        b | 0x8000_0000_0000_0000
    } else {
        !b
    }
}

/// Stable LSD radix sort over (key, index) pairs, 8 byte-sized digits.
/// Passes where every key shares the digit are identity copies and skipped.
fn radix_sort_pairs(pairs: &mut Vec<(u64, u64)>) {
    let n = pairs.len();
    let mut aux: Vec<(u64, u64)> = vec![(0, 0); n];
    for pass in 0..8u32 {
        let shift = pass * 8;
        let mut counts = [0usize; 256];
        for &(k, _) in pairs.iter() {
            counts[((k >> shift) & 0xff) as usize] += 1;
        }
        if counts.contains(&n) {
            continue;
        }
        let mut offsets = [0usize; 256];
        let mut acc = 0;
        for d in 0..256 {
            offsets[d] = acc;
            acc += counts[d];
        }
        for &(k, i) in pairs.iter() {
            let d = ((k >> shift) & 0xff) as usize;
            aux[offsets[d]] = (k, i);
            offsets[d] += 1;
        }
        std::mem::swap(pairs, &mut aux);
    }
}

// below this length the comparison sort wins over 8 radix passes
const RADIX_MIN_LEN: usize = 256;

/// Permutation that sorts `a` ascending; ties keep ascending original index.
pub fn ascending_sort_permutation(a: &[f64]) -> Result<Permutation> {
    if a.is_empty() {
        return Err(OodError::EmptyInput("sort permutation"));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(OodError::NonFiniteInput("sort permutation"));
    }
    let indices = if a.len() < RADIX_MIN_LEN {
        // (value, index) pairs are always distinct, so the unstable sort
        // yields exactly the stable ascending-index tie order
        let mut pairs: Vec<(f64, usize)> =
            a.iter().copied().enumerate().map(|(i, v)| (v, i)).collect();
        pairs.sort_unstable_by(|x, y| x.0.partial_cmp(&y.0).unwrap().then(x.1.cmp(&y.1)));
        pairs.into_iter().map(|(_, i)| i).collect()
    } else {
        let mut pairs: Vec<(u64, u64)> = a
            .iter()
            .enumerate()
            .map(|(i, &v)| (monotone_key(v), i as u64))
            .collect();
        radix_sort_pairs(&mut pairs);
        pairs.into_iter().map(|(_, i)| i as usize).collect()
    };
    Permutation::new(indices)
}

/// Linear-interpolation percentile: for sorted s and rank h = p/100 * (D-1),
/// returns s[floor(h)] + frac(h) * (s[floor(h)+1] - s[floor(h)]).
/// p = 0 is the minimum, p = 100 the maximum.
pub fn percentile(a: &[f64], p: f64) -> Result<f64> {
    if a.is_empty() {
        return Err(OodError::EmptyInput("percentile"));
    }
    if !(0.0..=100.0).contains(&p) {
        return Err(OodError::BadPercentile(p));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(OodError::NonFiniteInput("percentile"));
    }
    let mut s = a.to_vec();
    s.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let h = p / 100.0 * (s.len() - 1) as f64;
    let lo = h.floor() as usize;
    if lo + 1 >= s.len() {
        return Ok(s[s.len() - 1]);
    }
    Ok(s[lo] + (h - h.floor()) * (s[lo + 1] - s[lo]))
}

/// T * log sum_i exp(z_i / T), computed with a max shift so that large logits
/// never overflow.
pub fn logsumexp(z: &[f64], temperature: f64) -> Result<f64> {
    if z.is_empty() {
        return Err(OodError::EmptyInput("logsumexp"));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(OodError::NonFiniteInput("logsumexp"));
    }
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(OodError::NonPositiveTemperature(temperature));
    }
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = z.iter().map(|&v| ((v - m) / temperature).exp()).sum();
    Ok(m + temperature * sum.ln())
}

/// Max-shifted softmax.
pub fn softmax(z: &[f64]) -> Result<Vec<f64>> {
    if z.is_empty() {
        return Err(OodError::EmptyInput("softmax"));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(OodError::NonFiniteInput("softmax"));
    }
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|&v| (v - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.iter().map(|e| e / sum).collect())
}

pub fn l2_norm(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}
