//! Runtime verification suites behind the `gradcheck` and `selftest`
//! subcommands. The oracles here are deliberately independent of the kernels
//! they check: thresholds are re-derived by O(N^2) ranking, means by explicit
//! index loops, and gradients by central finite differences of the forward
//! objective.

use crate::augment::{assemble_view_batch, AugmentConfig};
use crate::encoder::{
    ClassVocabulary, EncoderWeights, ImageSample, PromptContext, DEFAULT_FEATURE_DIM,
    DEFAULT_INPUT_DIM, DEFAULT_PROMPT_TOKENS, DEFAULT_TEMPERATURE, DEFAULT_TOKEN_DIM,
};
use crate::error::Result;
use crate::numerics::{
    fraction_threshold, shannon_entropy, KeepDirection, ProbabilityVector, SelectionMask,
};
use crate::selection::{
    combine_masks, cosine_fidelity_mask, entropy_confidence_mask, marginal_probability,
};
use crate::streams::{stream_rng, TAG_AUDIT};
use crate::tuner::{
    adapt, marginal_entropy_gradient, marginal_entropy_loss, TuningConfig,
};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Finite-difference step for the gradient audit.
pub const GRADCHECK_STEP: f64 = 1e-5;
/// Relative tolerance of the gradient audit.
pub const GRADCHECK_REL_TOL: f64 = 1e-4;
/// Absolute floor below which coordinate deviations always pass.
pub const GRADCHECK_ABS_TOL: f64 = 1e-7;
/// Minimum gap between the entropy values at the selection boundary for an
/// instance to be eligible: finite differences step across the threshold
/// otherwise and measure the selection jump instead of the gradient.
const SELECTION_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradientAuditReport {
    pub instances: usize,
    pub coordinates_checked: usize,
    pub max_relative_error: f64,
    pub failures: usize,
    pub skipped_near_threshold: usize,
}

impl GradientAuditReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// Central finite differences of the full objective (masks recomputed at
/// every evaluation) against the analytic prompt gradient, over `instances`
/// random instances cycling K through {2, 5, 10} with M = 4 prompt tokens.
pub fn gradient_audit(instances: usize, seed: u64) -> Result<GradientAuditReport> {
    let class_counts = [2usize, 5, 10];
    let mut report = GradientAuditReport {
        instances: 0,
        coordinates_checked: 0,
        max_relative_error: 0.0,
        failures: 0,
        skipped_near_threshold: 0,
    };
    let mut attempt: u64 = 0;
    while report.instances < instances {
        let k = class_counts[report.instances % class_counts.len()];
        let mut rng = stream_rng(seed, &[TAG_AUDIT, 1, attempt]);
        attempt += 1;

        let weights = EncoderWeights::seeded(
            DEFAULT_INPUT_DIM,
            DEFAULT_FEATURE_DIM,
            DEFAULT_TOKEN_DIM,
            DEFAULT_TEMPERATURE,
            &mut rng,
        )?;
        let prompt =
            PromptContext::seeded_init(DEFAULT_PROMPT_TOKENS, DEFAULT_TOKEN_DIM, &mut rng);
        let tokens = (0..k)
            .map(|_| PromptContext::seeded_init(1, DEFAULT_TOKEN_DIM, &mut rng).tokens()[0].clone())
            .collect();
        let names = (0..k).map(|i| format!("class_{i}")).collect();
        let vocab = ClassVocabulary::new(tokens, names)?;
        let raw: Vec<f64> = (0..DEFAULT_INPUT_DIM)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let sample = ImageSample::new(raw);
        let augix = attempt;
        let aug = AugmentConfig {
            n_standard: 16,
            n_diffusion: 15,
            seed: seed ^ augix,
            ..AugmentConfig::default()
        };
        let tuning = TuningConfig::default();
        let views = assemble_view_batch(&sample, &aug, &weights, None, 0)?;

        let eval = marginal_entropy_loss(&prompt, &vocab, &weights, &views, &tuning)?;
        if entropy_boundary_margin(&eval.view_probs, tuning.rho_h) < SELECTION_MARGIN {
            report.skipped_near_threshold += 1;
            continue;
        }
        report.instances += 1;

        let analytic = marginal_entropy_gradient(&eval, &prompt, &vocab, &weights, &views)?;
        for ti in 0..prompt.num_tokens() {
            for di in 0..prompt.token_dim() {
                let mut plus = prompt.clone();
                plus.tokens_mut()[ti][di] += GRADCHECK_STEP;
                let mut minus = prompt.clone();
                minus.tokens_mut()[ti][di] -= GRADCHECK_STEP;
                let f_plus =
                    marginal_entropy_loss(&plus, &vocab, &weights, &views, &tuning)?.loss;
                let f_minus =
                    marginal_entropy_loss(&minus, &vocab, &weights, &views, &tuning)?.loss;
                let numeric = (f_plus - f_minus) / (2.0 * GRADCHECK_STEP);
                let a = analytic[ti][di];
                let abs_err = (a - numeric).abs();
                report.coordinates_checked += 1;
                if abs_err <= GRADCHECK_ABS_TOL {
                    continue;
                }
                let rel = abs_err / a.abs().max(numeric.abs());
                report.max_relative_error = report.max_relative_error.max(rel);
                if rel > GRADCHECK_REL_TOL {
                    report.failures += 1;
                }
            }
        }
    }
    Ok(report)
}

/// Gap between the last kept and first dropped entropy under the ceil rule.
fn entropy_boundary_margin(view_probs: &[ProbabilityVector], rho_h: f64) -> f64 {
    let mut entropies: Vec<f64> = view_probs.iter().map(shannon_entropy).collect();
    let n = entropies.len();
    let k = ((rho_h * n as f64).ceil() as usize).clamp(1, n);
    if k == n {
        return f64::INFINITY;
    }
    entropies.sort_by(|a, b| a.partial_cmp(b).unwrap());
    entropies[k] - entropies[k - 1]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelftestCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelftestReport {
    pub checks: Vec<SelftestCheck>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Brute-force oracle equivalence for the selection kernels plus the
/// normalization invariants of a live pipeline run.
pub fn selftest(seed: u64) -> Result<SelftestReport> {
    let mut checks = Vec::new();
    checks.push(check_threshold_oracle(seed)?);
    checks.push(check_mask_oracles(seed)?);
    checks.push(check_marginal_oracle(seed)?);
    checks.push(check_pipeline_invariants(seed)?);
    Ok(SelftestReport { checks })
}

/// O(N^2) ranking oracle: an index is kept iff fewer than k entries beat it
/// under the (value, index) order.
fn oracle_threshold(values: &[f64], fraction: f64, dir: KeepDirection) -> Vec<bool> {
    let n = values.len();
    let k = ((fraction * n as f64).ceil() as usize).clamp(1, n);
    (0..n)
        .map(|i| {
            let mut beaten_by = 0;
            for j in 0..n {
                if j == i {
                    continue;
                }
                let beats = match dir {
                    KeepDirection::KeepLowest => {
                        values[j] < values[i] || (values[j] == values[i] && j < i)
                    }
                    KeepDirection::KeepHighest => {
                        values[j] > values[i] || (values[j] == values[i] && j < i)
                    }
                };
                if beats {
                    beaten_by += 1;
                }
            }
            beaten_by < k
        })
        .collect()
}

fn random_distribution<R: Rng>(k: usize, rng: &mut R) -> ProbabilityVector {
    let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(1e-4..1.0)).collect();
    let sum: f64 = raw.iter().sum();
    ProbabilityVector::new(raw.into_iter().map(|x| x / sum).collect()).unwrap()
}

fn check_threshold_oracle(seed: u64) -> Result<SelftestCheck> {
    let mut rng = stream_rng(seed, &[TAG_AUDIT, 2]);
    let mut mismatches = 0;
    let instances = 1000;
    for _ in 0..instances {
        let n = rng.gen_range(1..=256);
        // Duplicates are likely here, which exercises the tie rule.
        let values: Vec<f64> = (0..n)
            .map(|_| (rng.gen_range(0..40) as f64) / 10.0)
            .collect();
        let fraction = rng.gen_range(0.01..=1.0);
        let dir = if rng.gen_bool(0.5) {
            KeepDirection::KeepLowest
        } else {
            KeepDirection::KeepHighest
        };
        let mask = fraction_threshold(&values, fraction, dir)?;
        if mask.keep() != oracle_threshold(&values, fraction, dir).as_slice() {
            mismatches += 1;
        }
    }
    Ok(SelftestCheck {
        name: "fraction_threshold matches ranking oracle".into(),
        passed: mismatches == 0,
        detail: format!("{mismatches}/{instances} mismatches"),
    })
}

fn check_mask_oracles(seed: u64) -> Result<SelftestCheck> {
    let mut rng = stream_rng(seed, &[TAG_AUDIT, 3]);
    let mut mismatches = 0;
    let instances = 1000;
    for i in 0..instances {
        let n = rng.gen_range(2..=128);
        let k = rng.gen_range(2..=10);
        let probs: Vec<ProbabilityVector> = (0..n).map(|_| random_distribution(k, &mut rng)).collect();
        let rho = rng.gen_range(0.05..=1.0);
        let mask = entropy_confidence_mask(&probs, rho)?;
        // Independent entropies via explicit loops.
        let entropies: Vec<f64> = probs
            .iter()
            .map(|p| {
                let mut h = 0.0;
                for &x in p.as_slice() {
                    if x > 0.0 {
                        h -= x * x.ln();
                    }
                }
                h
            })
            .collect();
        if mask.keep() != oracle_threshold(&entropies, rho, KeepDirection::KeepLowest).as_slice() {
            mismatches += 1;
        }

        // Cosine mask over a synthetic batch every few instances.
        if i % 4 == 0 {
            let batch = random_batch(seed ^ (i as u64), rng.gen_range(2..=64))?;
            let rho_c = rng.gen_range(0.05..=1.0);
            let mask = cosine_fidelity_mask(&batch, rho_c)?;
            let mut cosines = vec![1.0];
            for v in &batch.embeddings()[1..] {
                let mut dot = 0.0;
                let mut na = 0.0;
                let mut nb = 0.0;
                for (a, b) in v.as_slice().iter().zip(batch.original().as_slice()) {
                    dot += a * b;
                    na += a * a;
                    nb += b * b;
                }
                cosines.push((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0));
            }
            if mask.keep()
                != oracle_threshold(&cosines, rho_c, KeepDirection::KeepHighest).as_slice()
            {
                mismatches += 1;
            }
        }
    }
    Ok(SelftestCheck {
        name: "entropy and cosine masks match brute force".into(),
        passed: mismatches == 0,
        detail: format!("{mismatches}/{instances} mismatches"),
    })
}

fn random_batch(seed: u64, n: usize) -> Result<crate::augment::ViewBatch> {
    let mut rng = stream_rng(seed, &[TAG_AUDIT, 4]);
    let weights = EncoderWeights::seeded(
        DEFAULT_INPUT_DIM,
        DEFAULT_FEATURE_DIM,
        DEFAULT_TOKEN_DIM,
        DEFAULT_TEMPERATURE,
        &mut rng,
    )?;
    let raw: Vec<f64> = (0..DEFAULT_INPUT_DIM)
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    let aug = AugmentConfig {
        n_standard: n / 2,
        n_diffusion: n - 1 - n / 2,
        seed,
        ..AugmentConfig::default()
    };
    assemble_view_batch(&ImageSample::new(raw), &aug, &weights, None, 0)
}

fn check_marginal_oracle(seed: u64) -> Result<SelftestCheck> {
    let mut rng = stream_rng(seed, &[TAG_AUDIT, 5]);
    let mut worst: f64 = 0.0;
    let instances = 1000;
    for _ in 0..instances {
        let n = rng.gen_range(1..=256);
        let k = rng.gen_range(2..=10);
        let probs: Vec<ProbabilityVector> =
            (0..n).map(|_| random_distribution(k, &mut rng)).collect();
        let mut keep: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
        if keep.iter().all(|&b| !b) {
            keep[0] = true;
        }
        let mask = SelectionMask::new(keep.clone());
        let got = marginal_probability(&probs, &mask)?;
        let count = keep.iter().filter(|&&b| b).count() as f64;
        for class in 0..k {
            let mut total = 0.0;
            for (row, &b) in probs.iter().zip(&keep) {
                if b {
                    total += row.as_slice()[class];
                }
            }
            worst = worst.max((got.as_slice()[class] - total / count).abs());
        }
    }
    Ok(SelftestCheck {
        name: "marginal probability matches masked mean".into(),
        passed: worst <= 1e-12,
        detail: format!("max deviation {worst:.3e} over {instances} instances"),
    })
}

/// Runs a few live episodes and asserts the normalization invariants: every
/// marginal sums to 1 within 1e-9 and every recorded loss lies in [0, ln K].
fn check_pipeline_invariants(seed: u64) -> Result<SelftestCheck> {
    let mut rng = stream_rng(seed, &[TAG_AUDIT, 6]);
    let mut violations = 0;
    let episodes = 24;
    for i in 0..episodes {
        let k = [2usize, 5, 10][i % 3];
        let weights = EncoderWeights::seeded(
            DEFAULT_INPUT_DIM,
            DEFAULT_FEATURE_DIM,
            DEFAULT_TOKEN_DIM,
            DEFAULT_TEMPERATURE,
            &mut rng,
        )?;
        let prompt =
            PromptContext::seeded_init(DEFAULT_PROMPT_TOKENS, DEFAULT_TOKEN_DIM, &mut rng);
        let tokens = (0..k)
            .map(|_| PromptContext::seeded_init(1, DEFAULT_TOKEN_DIM, &mut rng).tokens()[0].clone())
            .collect();
        let names = (0..k).map(|c| format!("class_{c}")).collect();
        let vocab = ClassVocabulary::new(tokens, names)?;
        let raw: Vec<f64> = (0..DEFAULT_INPUT_DIM)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let aug = AugmentConfig {
            n_standard: 16,
            n_diffusion: 15,
            seed: seed ^ (i as u64),
            ..AugmentConfig::default()
        };
        let tuning = TuningConfig::default();
        let sample = ImageSample::new(raw);
        let views = assemble_view_batch(&sample, &aug, &weights, None, i as u64)?;
        let eval = marginal_entropy_loss(&prompt, &vocab, &weights, &views, &tuning)?;
        let bound = (k as f64).ln() + 1e-12;
        if (eval.marginal.as_slice().iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            violations += 1;
        }
        let report = adapt(&sample, &prompt, &vocab, &weights, &aug, &tuning, i as u64)?;
        for &loss in report
            .step_losses
            .iter()
            .chain([report.entropy_before, report.entropy_after].iter())
        {
            if !(0.0..=bound).contains(&loss) {
                violations += 1;
            }
        }
        let masks_ok = combine_masks(&eval.entropy_mask, &eval.cosine_mask)?
            .selected_count()
            >= 1;
        if !masks_ok {
            violations += 1;
        }
    }
    Ok(SelftestCheck {
        name: "marginals normalized and losses within [0, ln K]".into(),
        passed: violations == 0,
        detail: format!("{violations} violations over {episodes} episodes"),
    })
}
