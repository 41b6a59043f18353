//! Episodic per-sample prompt optimization: build the view batch once,
//! minimize the entropy of the filtered marginal prediction over the prompt
//! tokens for a fixed number of adaptive-moment steps, then predict.
//!
//! Every episode clones the shared prompt initialization and resets its
//! optimizer state, so samples never influence one another.

use crate::augment::{assemble_view_batch, AugmentConfig, ViewBatch};
use crate::encoder::{
    class_probabilities, encode_image, encode_text, prompt_gradient_of_loss, ClassVocabulary,
    EncoderWeights, ImageSample, PromptContext,
};
use crate::error::{Error, Result};
use crate::numerics::{shannon_entropy, ProbabilityVector, SelectionMask};
use crate::selection::{
    combine_masks, compute_masks, marginal_probability, SelectionDiagnostics,
};
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Which prediction the episode reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PredictionRule {
    /// Argmax on the original test embedding under the tuned prompt.
    OriginalView,
    /// Argmax of the final filtered marginal probability.
    Marginal,
}

/// Optimization and filtering knobs for one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningConfig {
    pub steps: usize,
    pub learning_rate: f64,
    pub rho_h: f64,
    pub rho_c: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub prediction_rule: PredictionRule,
    /// Recompute both masks from the current prompt at every step.
    pub recompute_masks: bool,
    /// Entropy filter over standard views only, cosine over generated only.
    pub per_family_filtering: bool,
}

impl Default for TuningConfig {
    fn default() -> Self {
        Self {
            steps: 4,
            learning_rate: 0.005,
            rho_h: 0.3,
            rho_c: 0.8,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            prediction_rule: PredictionRule::OriginalView,
            recompute_masks: true,
            per_family_filtering: false,
        }
    }
}

impl TuningConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidTask(format!(
                "learning_rate {} must be positive",
                self.learning_rate
            )));
        }
        for (name, rho) in [("rho_H", self.rho_h), ("rho_C", self.rho_c)] {
            if !(rho > 0.0 && rho <= 1.0) {
                return Err(Error::InvalidTask(format!(
                    "{name} {rho} must lie in (0, 1]"
                )));
            }
        }
        if !(self.beta1 >= 0.0 && self.beta1 < 1.0 && self.beta2 >= 0.0 && self.beta2 < 1.0) {
            return Err(Error::InvalidTask(
                "moment decays must lie in [0, 1)".into(),
            ));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidTask("epsilon must be positive".into()));
        }
        Ok(())
    }
}

/// First and second moment accumulators for the prompt tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
    step: usize,
}

impl OptimizerState {
    pub fn new(prompt: &PromptContext) -> Self {
        let zeros = vec![vec![0.0; prompt.token_dim()]; prompt.num_tokens()];
        Self {
            first_moment: zeros.clone(),
            second_moment: zeros,
            step: 0,
        }
    }

    pub fn step_count(&self) -> usize {
        self.step
    }
}

/// One adaptive-moment update over every prompt token.
pub fn tune_step(
    prompt: &mut PromptContext,
    state: &mut OptimizerState,
    gradient: &[Vec<f64>],
    config: &TuningConfig,
) -> Result<()> {
    if gradient.len() != prompt.num_tokens() {
        return Err(Error::LengthMismatch {
            left: gradient.len(),
            right: prompt.num_tokens(),
        });
    }
    for row in gradient {
        if row.len() != prompt.token_dim() {
            return Err(Error::LengthMismatch {
                left: row.len(),
                right: prompt.token_dim(),
            });
        }
        if !row.iter().all(|g| g.is_finite()) {
            return Err(Error::NonFiniteGradient);
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - config.beta1.powi(t);
    let bias2 = 1.0 - config.beta2.powi(t);
    for (ti, row) in gradient.iter().enumerate() {
        for (di, &g) in row.iter().enumerate() {
            let m = &mut state.first_moment[ti][di];
            *m = config.beta1 * *m + (1.0 - config.beta1) * g;
            let v = &mut state.second_moment[ti][di];
            *v = config.beta2 * *v + (1.0 - config.beta2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            prompt.tokens_mut()[ti][di] -=
                config.learning_rate * m_hat / (v_hat.sqrt() + config.epsilon);
        }
    }
    Ok(())
}

/// Forward evaluation of the tuning objective.
pub struct LossEvaluation {
    pub loss: f64,
    pub marginal: ProbabilityVector,
    pub view_probs: Vec<ProbabilityVector>,
    pub entropy_mask: SelectionMask,
    pub cosine_mask: SelectionMask,
    pub combined_mask: SelectionMask,
}

/// Entropy of the filtered marginal prediction under the current prompt.
pub fn marginal_entropy_loss(
    prompt: &PromptContext,
    vocab: &ClassVocabulary,
    weights: &EncoderWeights,
    views: &ViewBatch,
    config: &TuningConfig,
) -> Result<LossEvaluation> {
    config.validate()?;
    let text = encode_text(prompt, vocab, weights)?;
    let view_probs: Vec<ProbabilityVector> = views
        .embeddings()
        .iter()
        .map(|v| class_probabilities(v, &text, weights.temperature))
        .collect::<Result<_>>()?;
    let (entropy_mask, cosine_mask) = compute_masks(
        views,
        &view_probs,
        config.rho_h,
        config.rho_c,
        config.per_family_filtering,
    )?;
    let combined_mask = combine_masks(&entropy_mask, &cosine_mask)?;
    finish_loss(view_probs, entropy_mask, cosine_mask, combined_mask)
}

/// Same objective with the masks pinned, for runs that freeze the selection
/// after the first step.
pub fn marginal_entropy_loss_with_masks(
    prompt: &PromptContext,
    vocab: &ClassVocabulary,
    weights: &EncoderWeights,
    views: &ViewBatch,
    entropy_mask: &SelectionMask,
    cosine_mask: &SelectionMask,
) -> Result<LossEvaluation> {
    let text = encode_text(prompt, vocab, weights)?;
    let view_probs: Vec<ProbabilityVector> = views
        .embeddings()
        .iter()
        .map(|v| class_probabilities(v, &text, weights.temperature))
        .collect::<Result<_>>()?;
    let combined_mask = combine_masks(entropy_mask, cosine_mask)?;
    finish_loss(
        view_probs,
        entropy_mask.clone(),
        cosine_mask.clone(),
        combined_mask,
    )
}

fn finish_loss(
    view_probs: Vec<ProbabilityVector>,
    entropy_mask: SelectionMask,
    cosine_mask: SelectionMask,
    combined_mask: SelectionMask,
) -> Result<LossEvaluation> {
    let marginal = marginal_probability(&view_probs, &combined_mask)?;
    let loss = shannon_entropy(&marginal);
    Ok(LossEvaluation {
        loss,
        marginal,
        view_probs,
        entropy_mask,
        cosine_mask,
        combined_mask,
    })
}

/// Gradient of the marginal entropy with respect to the prompt tokens, with
/// the selection treated as fixed at its current value.
pub fn marginal_entropy_gradient(
    eval: &LossEvaluation,
    prompt: &PromptContext,
    vocab: &ClassVocabulary,
    weights: &EncoderWeights,
    views: &ViewBatch,
) -> Result<Vec<Vec<f64>>> {
    let k = eval.marginal.len();
    let selected = eval.combined_mask.selected_count() as f64;
    // d(-sum q ln q)/d(q_k) = -(ln q_k + 1); each selected view contributes
    // 1/|S| of its probability vector to the marginal. Zero-probability
    // classes contribute nothing: every selected view has zero mass there.
    let d_marginal: Vec<f64> = eval
        .marginal
        .as_slice()
        .iter()
        .map(|&q| if q > 0.0 { -(q.ln() + 1.0) } else { 0.0 })
        .collect();
    let upstream: Vec<Vec<f64>> = (0..views.len())
        .map(|n| {
            if eval.combined_mask.is_kept(n) {
                d_marginal.iter().map(|d| d / selected).collect()
            } else {
                vec![0.0; k]
            }
        })
        .collect();
    prompt_gradient_of_loss(prompt, vocab, weights, &upstream, views)
}

/// Everything one episode produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptationReport {
    pub predicted: usize,
    pub entropy_before: f64,
    pub entropy_after: f64,
    pub step_losses: Vec<f64>,
    pub selected_views: usize,
    pub diagnostics: Option<SelectionDiagnostics>,
    pub wall_time_secs: f64,
}

impl AdaptationReport {
    pub const CSV_HEADER: &'static str =
        "sample_id,label,predicted,correct,entropy_before,entropy_after,steps,selected_views";

    /// Summary CSV row matching `CSV_HEADER`. Wall time is deliberately
    /// excluded so identical runs stay byte-identical.
    pub fn csv_row(&self, sample_id: usize, label: Option<usize>) -> String {
        let label_str = label.map_or_else(|| "-".to_string(), |l| l.to_string());
        let correct = label.map_or_else(|| "-".to_string(), |l| (l == self.predicted).to_string());
        format!(
            "{},{},{},{},{},{},{},{}",
            sample_id,
            label_str,
            self.predicted,
            correct,
            self.entropy_before,
            self.entropy_after,
            self.step_losses.len(),
            self.selected_views
        )
    }
}

/// Runs one adaptation episode. The views are generated once and reused
/// across steps; masks follow `config.recompute_masks`.
pub fn adapt(
    sample: &ImageSample,
    prompt_init: &PromptContext,
    vocab: &ClassVocabulary,
    weights: &EncoderWeights,
    aug_config: &AugmentConfig,
    config: &TuningConfig,
    sample_index: u64,
) -> Result<AdaptationReport> {
    config.validate()?;
    let start = Instant::now();
    let mut prompt = prompt_init.clone();
    let mut state = OptimizerState::new(&prompt);
    let views = assemble_view_batch(sample, aug_config, weights, None, sample_index)?;

    let mut eval = marginal_entropy_loss(&prompt, vocab, weights, &views, config)?;
    let frozen_masks = (!config.recompute_masks)
        .then(|| (eval.entropy_mask.clone(), eval.cosine_mask.clone()));
    let entropy_before = eval.loss;
    let mut step_losses = Vec::with_capacity(config.steps);
    for _ in 0..config.steps {
        step_losses.push(eval.loss);
        let gradient = marginal_entropy_gradient(&eval, &prompt, vocab, weights, &views)?;
        tune_step(&mut prompt, &mut state, &gradient, config)?;
        eval = match &frozen_masks {
            Some((em, cm)) => {
                marginal_entropy_loss_with_masks(&prompt, vocab, weights, &views, em, cm)?
            }
            None => marginal_entropy_loss(&prompt, vocab, weights, &views, config)?,
        };
    }
    let entropy_after = eval.loss;

    let predicted = match config.prediction_rule {
        PredictionRule::OriginalView => {
            let text = encode_text(&prompt, vocab, weights)?;
            class_probabilities(views.original(), &text, weights.temperature)?.argmax()
        }
        PredictionRule::Marginal => eval.marginal.argmax(),
    };
    let diagnostics = SelectionDiagnostics::new(
        &views,
        &eval.view_probs,
        &eval.entropy_mask,
        &eval.cosine_mask,
        &eval.combined_mask,
    )?;
    Ok(AdaptationReport {
        predicted,
        entropy_before,
        entropy_after,
        selected_views: eval.combined_mask.selected_count(),
        step_losses,
        diagnostics: Some(diagnostics),
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

/// Argmax prediction on the encoded sample with the untuned prompt.
pub fn zero_shot_predict(
    sample: &ImageSample,
    prompt_init: &PromptContext,
    vocab: &ClassVocabulary,
    weights: &EncoderWeights,
) -> Result<usize> {
    Ok(zero_shot_probabilities(sample, prompt_init, vocab, weights)?.argmax())
}

pub fn zero_shot_probabilities(
    sample: &ImageSample,
    prompt_init: &PromptContext,
    vocab: &ClassVocabulary,
    weights: &EncoderWeights,
) -> Result<ProbabilityVector> {
    let e = encode_image(sample, weights)?;
    let text = encode_text(prompt_init, vocab, weights)?;
    class_probabilities(&e, &text, weights.temperature)
}
