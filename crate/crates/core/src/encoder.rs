//! A small differentiable dual encoder: a fixed linear image encoder and a
//! text encoder that mean-pools learnable prompt tokens with a class token
//! before a fixed linear projection. Both project into a shared unit-norm
//! embedding space scored by cosine similarity.
//!
//! The prompt tokens are the only trainable parameters. Their gradient is
//! computed analytically through softmax, cosine scoring, normalization,
//! projection, and pooling, and is cross-checked against central finite
//! differences in the tests and the `gradcheck` audit.

use crate::augment::ViewBatch;
use crate::error::{Error, Result};
use crate::numerics::{self, ProbabilityVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub const DEFAULT_INPUT_DIM: usize = 32;
pub const DEFAULT_FEATURE_DIM: usize = 16;
pub const DEFAULT_TOKEN_DIM: usize = 16;
pub const DEFAULT_TEMPERATURE: f64 = 0.07;
pub const DEFAULT_PROMPT_TOKENS: usize = 4;

/// Dense row-major matrix, just large enough for the fixed projections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let r = rows.len();
        if r == 0 {
            return Err(Error::EmptyInput);
        }
        let c = rows[0].len();
        let mut data = Vec::with_capacity(r * c);
        for row in &rows {
            if row.len() != c {
                return Err(Error::LengthMismatch {
                    left: c,
                    right: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self { rows: r, cols: c, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self { rows: n, cols: n, data }
    }

    /// Entries drawn i.i.d. from `N(0, 1/cols)`, the usual well-conditioned
    /// scaling for a random projection.
    pub fn seeded_normal<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, 1.0 / (cols as f64).sqrt()).unwrap();
        let data = (0..rows * cols).map(|_| normal.sample(rng)).collect();
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                actual: x.len(),
                context: "matvec",
            });
        }
        Ok((0..self.rows).map(|i| numerics::dot(self.row(i), x)).collect())
    }

    /// `transpose(self) * x`.
    pub fn t_matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.rows {
            return Err(Error::DimensionMismatch {
                expected: self.rows,
                actual: x.len(),
                context: "t_matvec",
            });
        }
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            let row = self.row(i);
            let xi = x[i];
            for (o, &r) in out.iter_mut().zip(row) {
                *o += xi * r;
            }
        }
        Ok(out)
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }
}

/// A raw test input plus an optional evaluation-only label. The label is
/// never read during adaptation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageSample {
    pub raw: Vec<f64>,
    pub label: Option<usize>,
}

impl ImageSample {
    pub fn new(raw: Vec<f64>) -> Self {
        Self { raw, label: None }
    }

    pub fn labeled(raw: Vec<f64>, label: usize) -> Self {
        Self {
            raw,
            label: Some(label),
        }
    }
}

/// Unit-norm vector in the shared embedding space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEmbedding(Vec<f64>);

impl FeatureEmbedding {
    /// Normalizes `v` into the embedding space.
    pub fn normalized(v: &[f64]) -> Result<Self> {
        Ok(Self(numerics::l2_normalize(v)?))
    }

    /// Wraps a vector that must already be unit norm (within 1e-9).
    pub fn from_unit(v: Vec<f64>) -> Result<Self> {
        let norm = numerics::l2_norm(&v);
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidProbability(format!(
                "embedding norm {norm} is not 1"
            )));
        }
        Ok(Self(v))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// Learnable prompt tokens, pooled with each class token before encoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptContext {
    tokens: Vec<Vec<f64>>,
}

impl PromptContext {
    pub fn new(tokens: Vec<Vec<f64>>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::EmptyInput);
        }
        let dim = tokens[0].len();
        for t in &tokens {
            if t.len() != dim {
                return Err(Error::LengthMismatch {
                    left: dim,
                    right: t.len(),
                });
            }
            if !t.iter().all(|x| x.is_finite()) {
                return Err(Error::NonFiniteInput { context: "prompt token" });
            }
        }
        Ok(Self { tokens })
    }

    /// The shared initialization analog of a hand-crafted default prompt:
    /// a fixed seeded draw reused as the reset target for every episode.
    pub fn seeded_init<R: Rng>(num_tokens: usize, token_dim: usize, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, 1.0 / (token_dim as f64).sqrt()).unwrap();
        let tokens = (0..num_tokens)
            .map(|_| (0..token_dim).map(|_| normal.sample(rng)).collect())
            .collect();
        Self { tokens }
    }

    pub fn tokens(&self) -> &[Vec<f64>] {
        &self.tokens
    }

    pub fn tokens_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.tokens
    }

    pub fn num_tokens(&self) -> usize {
        self.tokens.len()
    }

    pub fn token_dim(&self) -> usize {
        self.tokens[0].len()
    }
}

/// Fixed per-task class tokens and display names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassVocabulary {
    class_tokens: Vec<Vec<f64>>,
    names: Vec<String>,
}

impl ClassVocabulary {
    pub fn new(class_tokens: Vec<Vec<f64>>, names: Vec<String>) -> Result<Self> {
        if class_tokens.len() < 2 {
            return Err(Error::InvalidTask(
                "vocabulary needs at least two classes".into(),
            ));
        }
        if class_tokens.len() != names.len() {
            return Err(Error::LengthMismatch {
                left: class_tokens.len(),
                right: names.len(),
            });
        }
        let dim = class_tokens[0].len();
        for t in &class_tokens {
            if t.len() != dim {
                return Err(Error::LengthMismatch {
                    left: dim,
                    right: t.len(),
                });
            }
            if !t.iter().all(|x| x.is_finite()) {
                return Err(Error::NonFiniteInput { context: "class token" });
            }
        }
        Ok(Self { class_tokens, names })
    }

    pub fn class_tokens(&self) -> &[Vec<f64>] {
        &self.class_tokens
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn num_classes(&self) -> usize {
        self.class_tokens.len()
    }

    pub fn token_dim(&self) -> usize {
        self.class_tokens[0].len()
    }
}

/// Fixed projections of both encoders plus the softmax temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderWeights {
    pub image_proj: Matrix,
    pub text_proj: Matrix,
    pub temperature: f64,
}

impl EncoderWeights {
    pub fn new(image_proj: Matrix, text_proj: Matrix, temperature: f64) -> Result<Self> {
        if !(temperature > 0.0) {
            return Err(Error::NonPositiveTemperature(temperature));
        }
        if image_proj.rows() != text_proj.rows() {
            return Err(Error::DimensionMismatch {
                expected: image_proj.rows(),
                actual: text_proj.rows(),
                context: "shared embedding dim",
            });
        }
        Ok(Self {
            image_proj,
            text_proj,
            temperature,
        })
    }

    /// Draws both projections once from a seeded standard normal scaled by
    /// `1/sqrt(dim)`.
    pub fn seeded<R: Rng>(
        input_dim: usize,
        feature_dim: usize,
        token_dim: usize,
        temperature: f64,
        rng: &mut R,
    ) -> Result<Self> {
        Self::new(
            Matrix::seeded_normal(feature_dim, input_dim, rng),
            Matrix::seeded_normal(feature_dim, token_dim, rng),
            temperature,
        )
    }

    pub fn feature_dim(&self) -> usize {
        self.image_proj.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.image_proj.cols()
    }

    pub fn token_dim(&self) -> usize {
        self.text_proj.cols()
    }
}

/// `normalize(W_img * raw)`.
pub fn encode_image(sample: &ImageSample, weights: &EncoderWeights) -> Result<FeatureEmbedding> {
    FeatureEmbedding::normalized(&weights.image_proj.matvec(&sample.raw)?)
}

pub(crate) fn encode_raw(raw: &[f64], weights: &EncoderWeights) -> Result<FeatureEmbedding> {
    FeatureEmbedding::normalized(&weights.image_proj.matvec(raw)?)
}

/// Forward artifacts of the text encoder, retained for the backward pass.
pub struct TextEncoding {
    /// Mean of prompt tokens and the class token, per class.
    pub pooled: Vec<Vec<f64>>,
    /// `W_txt * pooled`, per class, before normalization.
    pub projected: Vec<Vec<f64>>,
    pub norms: Vec<f64>,
    pub embeddings: Vec<FeatureEmbedding>,
}

/// Per-class text embeddings `normalize(W_txt * mean(prompt ++ class token))`.
pub fn encode_text(
    prompt: &PromptContext,
    vocab: &ClassVocabulary,
    weights: &EncoderWeights,
) -> Result<Vec<FeatureEmbedding>> {
    Ok(encode_text_cached(prompt, vocab, weights)?.embeddings)
}

pub fn encode_text_cached(
    prompt: &PromptContext,
    vocab: &ClassVocabulary,
    weights: &EncoderWeights,
) -> Result<TextEncoding> {
    if prompt.token_dim() != vocab.token_dim() {
        return Err(Error::DimensionMismatch {
            expected: prompt.token_dim(),
            actual: vocab.token_dim(),
            context: "prompt vs class token dim",
        });
    }
    if vocab.token_dim() != weights.token_dim() {
        return Err(Error::DimensionMismatch {
            expected: weights.token_dim(),
            actual: vocab.token_dim(),
            context: "token dim vs text projection",
        });
    }
    let m = prompt.num_tokens();
    let dim = prompt.token_dim();
    let mut prompt_sum = vec![0.0; dim];
    for token in prompt.tokens() {
        for (s, &t) in prompt_sum.iter_mut().zip(token) {
            *s += t;
        }
    }
    let denom = (m + 1) as f64;
    let mut pooled = Vec::with_capacity(vocab.num_classes());
    let mut projected = Vec::with_capacity(vocab.num_classes());
    let mut norms = Vec::with_capacity(vocab.num_classes());
    let mut embeddings = Vec::with_capacity(vocab.num_classes());
    for class_token in vocab.class_tokens() {
        let pool: Vec<f64> = prompt_sum
            .iter()
            .zip(class_token)
            .map(|(&s, &c)| (s + c) / denom)
            .collect();
        let proj = weights.text_proj.matvec(&pool)?;
        let norm = numerics::l2_norm(&proj);
        if norm <= numerics::NORM_FLOOR {
            return Err(Error::ZeroNorm { norm });
        }
        embeddings.push(FeatureEmbedding(proj.iter().map(|x| x / norm).collect()));
        pooled.push(pool);
        projected.push(proj);
        norms.push(norm);
    }
    Ok(TextEncoding {
        pooled,
        projected,
        norms,
        embeddings,
    })
}

/// Cosine-softmax class distribution for one embedding against the class
/// embeddings.
pub fn class_probabilities(
    embedding: &FeatureEmbedding,
    text: &[FeatureEmbedding],
    temperature: f64,
) -> Result<ProbabilityVector> {
    let sims = cosine_row(embedding, text)?;
    numerics::cosine_softmax(&sims, temperature)
}

fn cosine_row(embedding: &FeatureEmbedding, text: &[FeatureEmbedding]) -> Result<Vec<f64>> {
    text.iter()
        .map(|w| {
            if w.dim() != embedding.dim() {
                return Err(Error::DimensionMismatch {
                    expected: embedding.dim(),
                    actual: w.dim(),
                    context: "class embedding dim",
                });
            }
            // Both sides are unit norm, so the dot product is the cosine.
            Ok(numerics::dot(embedding.as_slice(), w.as_slice()).clamp(-1.0, 1.0))
        })
        .collect()
}

/// Exact gradient of a scalar loss with respect to every prompt token, given
/// the upstream gradients of the loss with respect to each view's class
/// probabilities. Views with an all-zero upstream gradient are skipped.
///
/// The chain runs softmax -> cosine scores -> normalization -> linear
/// projection -> mean pooling. Every prompt token receives the same gradient
/// because pooling is a mean.
pub fn prompt_gradient_of_loss(
    prompt: &PromptContext,
    vocab: &ClassVocabulary,
    weights: &EncoderWeights,
    upstream: &[Vec<f64>],
    views: &ViewBatch,
) -> Result<Vec<Vec<f64>>> {
    if upstream.len() != views.len() {
        return Err(Error::LengthMismatch {
            left: upstream.len(),
            right: views.len(),
        });
    }
    let text = encode_text_cached(prompt, vocab, weights)?;
    let k = vocab.num_classes();
    let feature_dim = weights.feature_dim();
    let tau = weights.temperature;

    // d(loss)/d(w_i) accumulated over views.
    let mut grad_w = vec![vec![0.0; feature_dim]; k];
    for (view, up) in views.embeddings().iter().zip(upstream) {
        if up.len() != k {
            return Err(Error::LengthMismatch {
                left: up.len(),
                right: k,
            });
        }
        if !up.iter().all(|g| g.is_finite()) {
            return Err(Error::NonFiniteGradient);
        }
        if up.iter().all(|&g| g == 0.0) {
            continue;
        }
        let sims = cosine_row(view, &text.embeddings)?;
        let probs = numerics::cosine_softmax(&sims, tau)?;
        let p = probs.as_slice();
        // Softmax Jacobian at temperature tau:
        // d(loss)/d(s_i) = p_i * (g_i - <g, p>) / tau.
        let g_dot_p = numerics::dot(up, p);
        for i in 0..k {
            let ds = p[i] * (up[i] - g_dot_p) / tau;
            if ds == 0.0 {
                continue;
            }
            for (gw, &e) in grad_w[i].iter_mut().zip(view.as_slice()) {
                *gw += ds * e;
            }
        }
    }

    // Backprop through normalization, projection, and pooling. The pooled
    // gradient is identical for every prompt token.
    let m = prompt.num_tokens();
    let denom = (m + 1) as f64;
    let mut token_grad = vec![0.0; prompt.token_dim()];
    for i in 0..k {
        let w = text.embeddings[i].as_slice();
        let gw = &grad_w[i];
        let radial = numerics::dot(w, gw);
        let du: Vec<f64> = gw
            .iter()
            .zip(w)
            .map(|(&g, &wi)| (g - radial * wi) / text.norms[i])
            .collect();
        let dpool = weights.text_proj.t_matvec(&du)?;
        for (t, &d) in token_grad.iter_mut().zip(&dpool) {
            *t += d / denom;
        }
    }
    Ok(vec![token_grad; m])
}
