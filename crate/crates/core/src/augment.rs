//! The view pool for one adaptation episode: the original encoded sample, a
//! stochastic coordinate-crop augmenter over raw inputs, and a
//! feature-conditioned generative surrogate that emits diverse embedding-space
//! views with a controlled rate of spurious ones.
//!
//! Every view draws from its own RNG stream keyed by
//! `(seed, sample index, view index)`, so batches are reproducible in
//! isolation and independent of processing order.

use crate::encoder::{encode_image, encode_raw, EncoderWeights, FeatureEmbedding, ImageSample};
use crate::error::{Error, Result};
use crate::numerics;
use crate::streams::{stream_rng, TAG_DIFFUSION_VIEW, TAG_STANDARD_VIEW};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Where a view came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViewSource {
    Original,
    Standard,
    Diffusion,
}

impl ViewSource {
    pub fn label(&self) -> &'static str {
        match self {
            ViewSource::Original => "original",
            ViewSource::Standard => "standard",
            ViewSource::Diffusion => "diffusion",
        }
    }
}

/// Knobs of both augmenters. The view counts follow the 64 standard plus 63
/// generated defaults; the continuous ranges are calibrated so that standard
/// views stay closer to the original than generated ones while generated
/// views cover a wider similarity spread.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub n_standard: usize,
    pub n_diffusion: usize,
    /// Surviving-coordinate fraction range for the crop augmenter.
    pub crop_fraction_range: (f64, f64),
    /// Scale of the Gaussian noise added to cropped raw vectors.
    pub noise_sigma: f64,
    /// Mixing weight range toward the original embedding for generated views.
    pub diversity_alpha_range: (f64, f64),
    /// Probability that a generated view is spurious.
    pub spurious_rate: f64,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            n_standard: 64,
            n_diffusion: 63,
            crop_fraction_range: (0.7, 1.0),
            noise_sigma: 0.05,
            diversity_alpha_range: (0.5, 0.9),
            spurious_rate: 0.1,
            seed: 0,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        let (clo, chi) = self.crop_fraction_range;
        if !(clo > 0.0 && clo <= chi && chi <= 1.0) {
            return Err(Error::InvalidTask(format!(
                "crop_fraction_range ({clo}, {chi}) must be well-ordered within (0, 1]"
            )));
        }
        let (alo, ahi) = self.diversity_alpha_range;
        if !(alo > 0.0 && alo <= ahi && ahi < 1.0) {
            return Err(Error::InvalidTask(format!(
                "diversity_alpha_range ({alo}, {ahi}) must be well-ordered within (0, 1)"
            )));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::InvalidTask(format!(
                "noise_sigma {} must be nonnegative",
                self.noise_sigma
            )));
        }
        if !(self.spurious_rate >= 0.0 && self.spurious_rate < 1.0) {
            return Err(Error::InvalidTask(format!(
                "spurious_rate {} must lie in [0, 1)",
                self.spurious_rate
            )));
        }
        Ok(())
    }
}

/// The pooled views of one episode. Index 0 is always the unmodified encoded
/// test sample. Spurious flags are diagnostics-only bookkeeping; selection
/// and tuning never read them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewBatch {
    embeddings: Vec<FeatureEmbedding>,
    sources: Vec<ViewSource>,
    spurious_flags: Vec<bool>,
}

impl ViewBatch {
    pub fn new(
        embeddings: Vec<FeatureEmbedding>,
        sources: Vec<ViewSource>,
        spurious_flags: Vec<bool>,
    ) -> Result<Self> {
        if embeddings.is_empty() {
            return Err(Error::EmptyInput);
        }
        if embeddings.len() != sources.len() || embeddings.len() != spurious_flags.len() {
            return Err(Error::LengthMismatch {
                left: embeddings.len(),
                right: sources.len().min(spurious_flags.len()),
            });
        }
        if sources[0] != ViewSource::Original
            || sources.iter().filter(|s| **s == ViewSource::Original).count() != 1
        {
            return Err(Error::InvalidTask(
                "a view batch has exactly one original view, at index 0".into(),
            ));
        }
        Ok(Self {
            embeddings,
            sources,
            spurious_flags,
        })
    }

    pub fn len(&self) -> usize {
        self.embeddings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.embeddings.is_empty()
    }

    pub fn embeddings(&self) -> &[FeatureEmbedding] {
        &self.embeddings
    }

    pub fn original(&self) -> &FeatureEmbedding {
        &self.embeddings[0]
    }

    pub fn sources(&self) -> &[ViewSource] {
        &self.sources
    }

    pub fn spurious_flags(&self) -> &[bool] {
        &self.spurious_flags
    }
}

/// Crop-style views: zero a contiguous coordinate window covering `1 - c` of
/// the input, rescale survivors by `1/c`, add Gaussian noise, then encode.
/// Deterministic given `(config.seed, sample_index, view index)`.
pub fn standard_augment(
    sample: &ImageSample,
    n: usize,
    config: &AugmentConfig,
    weights: &EncoderWeights,
    sample_index: u64,
) -> Result<Vec<FeatureEmbedding>> {
    config.validate()?;
    let dim = sample.raw.len();
    let (lo, hi) = config.crop_fraction_range;
    let mut views = Vec::with_capacity(n);
    for view_index in 0..n as u64 {
        let mut rng = stream_rng(
            config.seed,
            &[TAG_STANDARD_VIEW, sample_index, view_index],
        );
        let c = if hi > lo { rng.gen_range(lo..hi) } else { lo };
        let window = (((1.0 - c) * dim as f64).round() as usize).min(dim.saturating_sub(1));
        let start = if window == 0 {
            0
        } else {
            rng.gen_range(0..=dim - window)
        };
        let mut raw: Vec<f64> = sample
            .raw
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                if i >= start && i < start + window {
                    0.0
                } else {
                    x / c
                }
            })
            .collect();
        if config.noise_sigma > 0.0 {
            let noise = Normal::new(0.0, config.noise_sigma).unwrap();
            for x in raw.iter_mut() {
                *x += noise.sample(&mut rng);
            }
        }
        views.push(encode_raw(&raw, weights)?);
    }
    Ok(views)
}

/// Feature-conditioned surrogate generator: each view mixes the original
/// embedding with a fresh random unit direction. With probability
/// `spurious_rate` the view is dominated by the random direction and flagged
/// spurious. Deterministic given `(config.seed, sample_index, view index)`.
pub fn diffusion_augment(
    original: &FeatureEmbedding,
    n: usize,
    config: &AugmentConfig,
    sample_index: u64,
) -> Result<(Vec<FeatureEmbedding>, Vec<bool>)> {
    config.validate()?;
    let dim = original.dim();
    let (alo, ahi) = config.diversity_alpha_range;
    let mut views = Vec::with_capacity(n);
    let mut flags = Vec::with_capacity(n);
    for view_index in 0..n as u64 {
        let mut rng = stream_rng(
            config.seed,
            &[TAG_DIFFUSION_VIEW, sample_index, view_index],
        );
        let spurious = rng.gen::<f64>() < config.spurious_rate;
        let direction = random_unit(dim, &mut rng);
        let mixed: Vec<f64> = if spurious {
            original
                .as_slice()
                .iter()
                .zip(&direction)
                .map(|(&e, &u)| 0.3 * e + u)
                .collect()
        } else {
            let alpha = if ahi > alo { rng.gen_range(alo..ahi) } else { alo };
            original
                .as_slice()
                .iter()
                .zip(&direction)
                .map(|(&e, &u)| alpha * e + (1.0 - alpha) * u)
                .collect()
        };
        views.push(FeatureEmbedding::normalized(&mixed)?);
        flags.push(spurious);
    }
    Ok((views, flags))
}

fn random_unit<R: Rng>(dim: usize, rng: &mut R) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).unwrap();
    loop {
        let v: Vec<f64> = (0..dim).map(|_| normal.sample(rng)).collect();
        if let Ok(unit) = numerics::l2_normalize(&v) {
            return unit;
        }
    }
}

/// Builds the episode batch: original view, then standard views, then
/// generated views. A `mix_ratio` override keeps the total augmented budget
/// `n_standard + n_diffusion` fixed and re-splits it, with
/// `n_diffusion = round(mix_ratio * total)`.
pub fn assemble_view_batch(
    sample: &ImageSample,
    config: &AugmentConfig,
    weights: &EncoderWeights,
    mix_ratio: Option<f64>,
    sample_index: u64,
) -> Result<ViewBatch> {
    config.validate()?;
    let (n_standard, n_diffusion) = match mix_ratio {
        Some(r) => {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::InvalidTask(format!(
                    "mix_ratio {r} must lie in [0, 1]"
                )));
            }
            let total = config.n_standard + config.n_diffusion;
            let n_diff = (r * total as f64).round() as usize;
            (total - n_diff, n_diff)
        }
        None => (config.n_standard, config.n_diffusion),
    };

    let original = encode_image(sample, weights)?;
    let standard = standard_augment(sample, n_standard, config, weights, sample_index)?;
    let (diffusion, diffusion_flags) =
        diffusion_augment(&original, n_diffusion, config, sample_index)?;

    let mut embeddings = Vec::with_capacity(1 + n_standard + n_diffusion);
    let mut sources = Vec::with_capacity(embeddings.capacity());
    let mut flags = Vec::with_capacity(embeddings.capacity());
    embeddings.push(original);
    sources.push(ViewSource::Original);
    flags.push(false);
    for v in standard {
        embeddings.push(v);
        sources.push(ViewSource::Standard);
        flags.push(false);
    }
    for (v, f) in diffusion.into_iter().zip(diffusion_flags) {
        embeddings.push(v);
        sources.push(ViewSource::Diffusion);
        flags.push(f);
    }
    ViewBatch::new(embeddings, sources, flags)
}
