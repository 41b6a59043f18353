//! Dense-vector kernels shared by every stage of the pipeline:
//! normalization, cosine similarity, temperature softmax, Shannon entropy,
//! and fractional threshold selection.
//!
//! All kernels are pure functions over `f64` slices. Entropy uses the
//! natural logarithm so that `ln K` bounds hold exactly.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Norms at or below this are treated as zero.
pub const NORM_FLOOR: f64 = 1e-12;

/// A distribution over classes: nonnegative entries summing to 1 within 1e-9.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityVector(Vec<f64>);

impl ProbabilityVector {
    /// Validates and wraps a distribution. The sum tolerance is 1e-9.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::EmptyInput);
        }
        for &p in &probs {
            if !p.is_finite() || p < 0.0 {
                return Err(Error::InvalidProbability(format!(
                    "entry {p} is negative or non-finite"
                )));
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidProbability(format!(
                "entries sum to {sum}, expected 1"
            )));
        }
        Ok(Self(probs))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the largest entry; ties break to the lower index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.0.iter().enumerate() {
            if p > self.0[best] {
                best = i;
            }
        }
        best
    }
}

/// Which end of the value distribution a fractional threshold keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KeepDirection {
    KeepLowest,
    KeepHighest,
}

/// Boolean keep-vector over a view batch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionMask {
    keep: Vec<bool>,
}

impl SelectionMask {
    pub fn new(keep: Vec<bool>) -> Self {
        Self { keep }
    }

    pub fn all_true(n: usize) -> Self {
        Self {
            keep: vec![true; n],
        }
    }

    pub fn keep(&self) -> &[bool] {
        &self.keep
    }

    pub fn is_kept(&self, index: usize) -> bool {
        self.keep[index]
    }

    pub fn len(&self) -> usize {
        self.keep.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keep.is_empty()
    }

    pub fn selected_count(&self) -> usize {
        self.keep.iter().filter(|&&k| k).count()
    }

    /// Indices of kept entries, ascending.
    pub fn kept_indices(&self) -> Vec<usize> {
        self.keep
            .iter()
            .enumerate()
            .filter_map(|(i, &k)| k.then_some(i))
            .collect()
    }

    pub(crate) fn force_keep(&mut self, index: usize) {
        self.keep[index] = true;
    }
}

fn check_finite(v: &[f64], context: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteInput { context })
    }
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Scales `v` to unit norm. Errors with `ZeroNorm` when the norm is at or
/// below `NORM_FLOOR`.
pub fn l2_normalize(v: &[f64]) -> Result<Vec<f64>> {
    check_finite(v, "l2_normalize")?;
    let norm = l2_norm(v);
    if norm <= NORM_FLOOR {
        return Err(Error::ZeroNorm { norm });
    }
    Ok(v.iter().map(|x| x / norm).collect())
}

/// Cosine of the angle between `a` and `b`, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    check_finite(a, "cosine_similarity")?;
    check_finite(b, "cosine_similarity")?;
    let na = l2_norm(a);
    let nb = l2_norm(b);
    if na <= NORM_FLOOR {
        return Err(Error::ZeroNorm { norm: na });
    }
    if nb <= NORM_FLOOR {
        return Err(Error::ZeroNorm { norm: nb });
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Softmax of `similarities / temperature`, computed with max-subtraction so
/// that small temperatures do not overflow.
pub fn cosine_softmax(similarities: &[f64], temperature: f64) -> Result<ProbabilityVector> {
    if similarities.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(temperature > 0.0) {
        return Err(Error::NonPositiveTemperature(temperature));
    }
    check_finite(similarities, "cosine_softmax")?;
    let max = similarities.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = similarities
        .iter()
        .map(|&s| ((s - max) / temperature).exp())
        .collect();
    let sum: f64 = exps.iter().sum();
    ProbabilityVector::new(exps.into_iter().map(|e| e / sum).collect())
}

/// Shannon entropy `-sum p ln p` with the convention `0 ln 0 = 0`.
pub fn shannon_entropy(p: &ProbabilityVector) -> f64 {
    p.as_slice()
        .iter()
        .map(|&pi| if pi > 0.0 { -pi * pi.ln() } else { 0.0 })
        .sum()
}

/// Keeps exactly `ceil(fraction * N)` entries: the lowest or highest values
/// per `direction`, ties broken by lower index.
pub fn fraction_threshold(
    values: &[f64],
    fraction: f64,
    direction: KeepDirection,
) -> Result<SelectionMask> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidFraction(fraction));
    }
    check_finite(values, "fraction_threshold")?;
    let n = values.len();
    let k = ((fraction * n as f64).ceil() as usize).min(n).max(1);

    let mut order: Vec<usize> = (0..n).collect();
    match direction {
        KeepDirection::KeepLowest => {
            order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap().then(a.cmp(&b)))
        }
        KeepDirection::KeepHighest => {
            order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap().then(a.cmp(&b)))
        }
    }
    let mut keep = vec![false; n];
    for &i in order.iter().take(k) {
        keep[i] = true;
    }
    Ok(SelectionMask::new(keep))
}
