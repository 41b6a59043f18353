//! View filtering: entropy-based confidence selection, cosine-similarity
//! fidelity filtration, their combination, and the masked marginal
//! probability that the tuning objective minimizes.
//!
//! Both filters run over the full pooled batch by default. The per-family
//! variant (entropy over standard views, cosine over generated views) is kept
//! behind a switch so the alternative reading stays testable.

use crate::augment::{ViewBatch, ViewSource};
use crate::error::{Error, Result};
use crate::numerics::{
    self, fraction_threshold, shannon_entropy, KeepDirection, ProbabilityVector,
};
pub use crate::numerics::SelectionMask;
use serde::{Deserialize, Serialize};

/// Which filter removed a view, if any.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RemovalCategory {
    Kept,
    Entropy,
    Cosine,
    Both,
}

impl RemovalCategory {
    pub fn label(&self) -> &'static str {
        match self {
            RemovalCategory::Kept => "kept",
            RemovalCategory::Entropy => "entropy",
            RemovalCategory::Cosine => "cosine",
            RemovalCategory::Both => "both",
        }
    }
}

/// Per-view filtration log: the analog of inspecting which augmentations each
/// filter discarded, plus recall on the surrogate's spurious flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionDiagnostics {
    pub entropies: Vec<f64>,
    pub cosines: Vec<f64>,
    pub categories: Vec<RemovalCategory>,
    pub sources: Vec<ViewSource>,
    pub spurious_flags: Vec<bool>,
    /// Fraction of spurious-flagged views removed by the combined mask;
    /// `None` when the batch has no spurious views.
    pub spurious_recall: Option<f64>,
}

impl SelectionDiagnostics {
    pub fn new(
        views: &ViewBatch,
        view_probs: &[ProbabilityVector],
        entropy_mask: &SelectionMask,
        cosine_mask: &SelectionMask,
        combined: &SelectionMask,
    ) -> Result<Self> {
        let n = views.len();
        if view_probs.len() != n || entropy_mask.len() != n || cosine_mask.len() != n {
            return Err(Error::LengthMismatch {
                left: n,
                right: view_probs.len(),
            });
        }
        let entropies = view_probs.iter().map(shannon_entropy).collect();
        let cosines = cosines_to_original(views)?;
        let categories = (0..n)
            .map(|i| match (entropy_mask.is_kept(i), cosine_mask.is_kept(i)) {
                (true, true) => RemovalCategory::Kept,
                (false, true) => RemovalCategory::Entropy,
                (true, false) => RemovalCategory::Cosine,
                (false, false) => RemovalCategory::Both,
            })
            .collect();
        let spurious_recall = spurious_recall(views.spurious_flags(), combined);
        Ok(Self {
            entropies,
            cosines,
            categories,
            sources: views.sources().to_vec(),
            spurious_flags: views.spurious_flags().to_vec(),
            spurious_recall,
        })
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    pub const CSV_HEADER: &'static str =
        "sample_id,view_index,source,entropy,cosine,removal_category,spurious_flag";

    /// One CSV row per view, matching `CSV_HEADER`.
    pub fn csv_rows(&self, sample_id: usize) -> Vec<String> {
        (0..self.len())
            .map(|i| {
                format!(
                    "{},{},{},{},{},{},{}",
                    sample_id,
                    i,
                    self.sources[i].label(),
                    self.entropies[i],
                    self.cosines[i],
                    self.categories[i].label(),
                    self.spurious_flags[i]
                )
            })
            .collect()
    }
}

/// Fraction of flagged views that `mask` drops; `None` without flagged views.
pub fn spurious_recall(flags: &[bool], mask: &SelectionMask) -> Option<f64> {
    let total = flags.iter().filter(|&&f| f).count();
    if total == 0 {
        return None;
    }
    let removed = flags
        .iter()
        .enumerate()
        .filter(|(i, &f)| f && !mask.is_kept(*i))
        .count();
    Some(removed as f64 / total as f64)
}

/// Keeps the `rho_h` fraction of views with the lowest prediction entropy.
pub fn entropy_confidence_mask(
    view_probs: &[ProbabilityVector],
    rho_h: f64,
) -> Result<SelectionMask> {
    if view_probs.is_empty() {
        return Err(Error::EmptyInput);
    }
    let entropies: Vec<f64> = view_probs.iter().map(shannon_entropy).collect();
    fraction_threshold(&entropies, rho_h, KeepDirection::KeepLowest)
}

fn cosines_to_original(views: &ViewBatch) -> Result<Vec<f64>> {
    let original = views.original();
    views
        .embeddings()
        .iter()
        .enumerate()
        .map(|(i, v)| {
            if i == 0 {
                // By definition; also guarantees the original wins ties at the top.
                Ok(1.0)
            } else {
                numerics::cosine_similarity(v.as_slice(), original.as_slice())
            }
        })
        .collect()
}

/// Keeps the `rho_c` fraction of views most similar to the original view.
/// The original itself has cosine 1 and is always kept.
pub fn cosine_fidelity_mask(views: &ViewBatch, rho_c: f64) -> Result<SelectionMask> {
    let cosines = cosines_to_original(views)?;
    let mask = fraction_threshold(&cosines, rho_c, KeepDirection::KeepHighest)?;
    debug_assert!(mask.is_kept(0));
    Ok(mask)
}

/// Logical AND of the two filters. An empty intersection falls back to the
/// original view so the marginal probability is always defined.
pub fn combine_masks(entropy_mask: &SelectionMask, cosine_mask: &SelectionMask) -> Result<SelectionMask> {
    if entropy_mask.len() != cosine_mask.len() {
        return Err(Error::LengthMismatch {
            left: entropy_mask.len(),
            right: cosine_mask.len(),
        });
    }
    let keep: Vec<bool> = entropy_mask
        .keep()
        .iter()
        .zip(cosine_mask.keep())
        .map(|(&a, &b)| a && b)
        .collect();
    let mut mask = SelectionMask::new(keep);
    if mask.selected_count() == 0 {
        mask.force_keep(0);
    }
    Ok(mask)
}

/// Entropy and cosine masks for one batch. With `per_family` off (the
/// default), both filters see every view. With it on, the entropy filter
/// ranks only the original and standard views and the cosine filter ranks
/// only the generated ones; views outside a filter's family pass it freely.
pub fn compute_masks(
    views: &ViewBatch,
    view_probs: &[ProbabilityVector],
    rho_h: f64,
    rho_c: f64,
    per_family: bool,
) -> Result<(SelectionMask, SelectionMask)> {
    if view_probs.len() != views.len() {
        return Err(Error::LengthMismatch {
            left: views.len(),
            right: view_probs.len(),
        });
    }
    if !per_family {
        let entropy_mask = entropy_confidence_mask(view_probs, rho_h)?;
        let cosine_mask = cosine_fidelity_mask(views, rho_c)?;
        return Ok((entropy_mask, cosine_mask));
    }

    let entropy_family: Vec<usize> = views
        .sources()
        .iter()
        .enumerate()
        .filter_map(|(i, s)| (*s != ViewSource::Diffusion).then_some(i))
        .collect();
    let cosine_family: Vec<usize> = views
        .sources()
        .iter()
        .enumerate()
        .filter_map(|(i, s)| (*s == ViewSource::Diffusion).then_some(i))
        .collect();

    let entropies: Vec<f64> = view_probs.iter().map(shannon_entropy).collect();
    let cosines = cosines_to_original(views)?;
    let entropy_mask = family_mask(
        views.len(),
        &entropy_family,
        &entropies,
        rho_h,
        KeepDirection::KeepLowest,
    )?;
    let cosine_mask = family_mask(
        views.len(),
        &cosine_family,
        &cosines,
        rho_c,
        KeepDirection::KeepHighest,
    )?;
    Ok((entropy_mask, cosine_mask))
}

fn family_mask(
    n: usize,
    family: &[usize],
    values: &[f64],
    fraction: f64,
    direction: KeepDirection,
) -> Result<SelectionMask> {
    let mut keep = vec![true; n];
    if family.is_empty() {
        return Ok(SelectionMask::new(keep));
    }
    let family_values: Vec<f64> = family.iter().map(|&i| values[i]).collect();
    let family_keep = fraction_threshold(&family_values, fraction, direction)?;
    for (slot, &i) in family.iter().enumerate() {
        keep[i] = family_keep.is_kept(slot);
    }
    Ok(SelectionMask::new(keep))
}

/// Arithmetic mean of the selected views' class distributions.
pub fn marginal_probability(
    view_probs: &[ProbabilityVector],
    mask: &SelectionMask,
) -> Result<ProbabilityVector> {
    if view_probs.is_empty() {
        return Err(Error::EmptyInput);
    }
    if view_probs.len() != mask.len() {
        return Err(Error::LengthMismatch {
            left: view_probs.len(),
            right: mask.len(),
        });
    }
    let selected = mask.selected_count();
    if selected == 0 {
        return Err(Error::EmptySelection);
    }
    let k = view_probs[0].len();
    let mut sum = vec![0.0; k];
    for (probs, &keep) in view_probs.iter().zip(mask.keep()) {
        if !keep {
            continue;
        }
        if probs.len() != k {
            return Err(Error::LengthMismatch {
                left: k,
                right: probs.len(),
            });
        }
        for (s, &p) in sum.iter_mut().zip(probs.as_slice()) {
            *s += p;
        }
    }
    let scale = 1.0 / selected as f64;
    ProbabilityVector::new(sum.into_iter().map(|s| s * scale).collect())
}
