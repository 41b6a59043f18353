//! Synthetic distribution-shift benchmark: task generation, the three
//! evaluation pipelines (zero-shot, entropy-only tuning over standard views,
//! and the full dual-filter engine), and the ablation sweeps with their CSV
//! formats.
//!
//! Tasks are declared synthetic stand-ins in all output metadata. Class
//! prototypes live in raw space; the vocabulary tokens are derived from the
//! prototypes through the text projection so that zero-shot prediction is
//! informative, then deliberately corrupted so distribution shift leaves
//! headroom for adaptation.

use crate::augment::AugmentConfig;
use crate::encoder::{
    ClassVocabulary, EncoderWeights, ImageSample, Matrix, PromptContext, DEFAULT_FEATURE_DIM,
    DEFAULT_PROMPT_TOKENS, DEFAULT_TEMPERATURE, DEFAULT_TOKEN_DIM,
};
use crate::error::{Error, Result};
use crate::numerics::{self, shannon_entropy};
use crate::streams::{
    stream_rng, TAG_TASK_PROTOTYPES, TAG_TASK_SAMPLES, TAG_TASK_SHIFT, TAG_VOCABULARY,
};
use crate::tuner::{adapt, zero_shot_probabilities, AdaptationReport, TuningConfig};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Angle of the fixed corruption rotation applied to prototypes before they
/// become vocabulary anchors.
const VOCAB_ROTATION_ANGLE: f64 = 0.12;
/// Scale of the seeded noise mixed into each vocabulary anchor.
const VOCAB_NOISE_SCALE: f64 = 0.06;
/// Maximum pairwise prototype cosine; draws above this are rejected.
const PROTOTYPE_MAX_COSINE: f64 = 0.8;
const MAX_PROTOTYPE_REJECTIONS: usize = 1000;

/// Parameters of one synthetic task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskParams {
    pub classes: usize,
    pub input_dim: usize,
    /// Rotation angle of the shift transform, radians.
    pub shift_angle: f64,
    /// Norm of the bias added by the shift transform.
    pub bias_scale: f64,
    /// In-domain Gaussian noise scale around each prototype.
    pub noise_scale: f64,
    pub n_test: usize,
    pub seed: u64,
}

impl Default for TaskParams {
    fn default() -> Self {
        Self {
            classes: 10,
            input_dim: 32,
            shift_angle: 0.5,
            bias_scale: 0.6,
            noise_scale: 0.25,
            n_test: 200,
            seed: 0,
        }
    }
}

/// A generated task: labeled shifted samples plus the frozen encoder side
/// (weights, vocabulary, shared prompt initialization).
#[derive(Debug, Clone)]
pub struct SyntheticTask {
    pub prototypes: Vec<Vec<f64>>,
    pub samples: Vec<ImageSample>,
    pub weights: EncoderWeights,
    pub vocab: ClassVocabulary,
    pub prompt_init: PromptContext,
    pub seed: u64,
}

/// Fraction of coordinates the shift bias concentrates on.
const BIAS_WINDOW_FRACTION: f64 = 0.25;

/// The shift bias: norm `bias_scale`, concentrated on a contiguous seeded
/// coordinate window so that the corruption has raw-space structure.
fn bias_vector<R: Rng>(dim: usize, bias_scale: f64, rng: &mut R) -> Vec<f64> {
    let window = ((dim as f64 * BIAS_WINDOW_FRACTION).round() as usize).clamp(1, dim);
    let start = rng.gen_range(0..dim);
    let mut signs = vec![0.0; dim];
    for offset in 0..window {
        signs[(start + offset) % dim] = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    }
    let per_coord = bias_scale / (window as f64).sqrt();
    signs.into_iter().map(|s| s * per_coord).collect()
}

/// Rotation by `angle` in every disjoint coordinate plane `(0,1), (2,3), ...`;
/// orthogonal, and `<x, Rx> = cos(angle) * |x|^2` when the dimension is even.
fn rotate_pairs(x: &[f64], angle: f64) -> Vec<f64> {
    let (s, c) = angle.sin_cos();
    let mut out = x.to_vec();
    let mut i = 0;
    while i + 1 < out.len() {
        let (a, b) = (out[i], out[i + 1]);
        out[i] = c * a - s * b;
        out[i + 1] = s * a + c * b;
        i += 2;
    }
    out
}

fn gaussian_vec<R: Rng>(dim: usize, scale: f64, rng: &mut R) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).unwrap();
    (0..dim).map(|_| scale * normal.sample(rng)).collect()
}

fn unit_vec<R: Rng>(dim: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v = gaussian_vec(dim, 1.0, rng);
        if let Ok(u) = numerics::l2_normalize(&v) {
            return u;
        }
    }
}

/// Solves `a x = b` for square `a` by Gaussian elimination with partial
/// pivoting. Only used to derive vocabulary anchors.
fn solve_linear(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.rows();
    if a.cols() != n || b.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: b.len(),
            context: "linear solve",
        });
    }
    let mut aug: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row = a.row(i).to_vec();
            row.push(b[i]);
            row
        })
        .collect();
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&i, &j| aug[i][col].abs().partial_cmp(&aug[j][col].abs()).unwrap())
            .unwrap();
        if aug[pivot_row][col].abs() < 1e-12 {
            return Err(Error::InvalidTask("text projection is singular".into()));
        }
        aug.swap(col, pivot_row);
        for row in 0..n {
            if row == col {
                continue;
            }
            let factor = aug[row][col] / aug[col][col];
            if factor == 0.0 {
                continue;
            }
            for k in col..=n {
                aug[row][k] -= factor * aug[col][k];
            }
        }
    }
    Ok((0..n).map(|i| aug[i][n] / aug[i][i]).collect())
}

fn draw_prototypes(params: &TaskParams) -> Result<Vec<Vec<f64>>> {
    let mut rng = stream_rng(params.seed, &[TAG_TASK_PROTOTYPES]);
    let mut prototypes: Vec<Vec<f64>> = Vec::with_capacity(params.classes);
    let mut rejections = 0;
    while prototypes.len() < params.classes {
        let candidate = unit_vec(params.input_dim, &mut rng);
        let separated = prototypes
            .iter()
            .all(|p| numerics::dot(p, &candidate) < PROTOTYPE_MAX_COSINE);
        if separated {
            prototypes.push(candidate);
        } else {
            rejections += 1;
            if rejections > MAX_PROTOTYPE_REJECTIONS {
                return Err(Error::SeparationFailure {
                    classes: params.classes,
                    attempts: rejections,
                });
            }
        }
    }
    Ok(prototypes)
}

/// Vocabulary anchors: each class token is chosen so that, under the shared
/// prompt initialization, the text embedding lands on the image embedding of
/// a slightly rotated and noised copy of the class prototype.
fn derive_vocabulary(
    prototypes: &[Vec<f64>],
    weights: &EncoderWeights,
    prompt_init: &PromptContext,
    seed: u64,
) -> Result<ClassVocabulary> {
    if weights.token_dim() != weights.feature_dim() {
        return Err(Error::InvalidTask(
            "vocabulary derivation needs token dim == feature dim".into(),
        ));
    }
    let m = prompt_init.num_tokens() as f64;
    let mut prompt_sum = vec![0.0; prompt_init.token_dim()];
    for token in prompt_init.tokens() {
        for (s, &t) in prompt_sum.iter_mut().zip(token) {
            *s += t;
        }
    }
    let mut tokens = Vec::with_capacity(prototypes.len());
    let mut names = Vec::with_capacity(prototypes.len());
    for (i, proto) in prototypes.iter().enumerate() {
        let mut rng = stream_rng(seed, &[TAG_VOCABULARY, i as u64]);
        let mut corrupted = rotate_pairs(proto, VOCAB_ROTATION_ANGLE);
        for (c, n) in corrupted
            .iter_mut()
            .zip(gaussian_vec(proto.len(), VOCAB_NOISE_SCALE, &mut rng))
        {
            *c += n;
        }
        let target = weights.image_proj.matvec(&corrupted)?;
        let pooled = solve_linear(&weights.text_proj, &target)?;
        let token: Vec<f64> = pooled
            .iter()
            .zip(&prompt_sum)
            .map(|(&p, &s)| (m + 1.0) * p - s)
            .collect();
        tokens.push(token);
        names.push(format!("class_{i}"));
    }
    ClassVocabulary::new(tokens, names)
}

/// Generates a task from scratch, drawing encoder weights from the task seed.
pub fn make_synthetic_task(params: &TaskParams) -> Result<SyntheticTask> {
    let mut weight_rng = stream_rng(params.seed, &[crate::streams::TAG_ENCODER_WEIGHTS]);
    let weights = EncoderWeights::seeded(
        params.input_dim,
        DEFAULT_FEATURE_DIM,
        DEFAULT_TOKEN_DIM,
        DEFAULT_TEMPERATURE,
        &mut weight_rng,
    )?;
    make_synthetic_task_with_weights(params, weights)
}

/// Same as [`make_synthetic_task`] but with caller-provided weights, so
/// several tasks with disjoint prototype sets can share one encoder.
pub fn make_synthetic_task_with_weights(
    params: &TaskParams,
    weights: EncoderWeights,
) -> Result<SyntheticTask> {
    if params.classes < 2 {
        return Err(Error::InvalidTask("a task needs at least 2 classes".into()));
    }
    if params.n_test < 1 {
        return Err(Error::InvalidTask("a task needs at least 1 sample".into()));
    }
    if params.input_dim != weights.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: weights.input_dim(),
            actual: params.input_dim,
            context: "task input dim",
        });
    }
    let prototypes = draw_prototypes(params)?;
    let mut prompt_rng = stream_rng(params.seed, &[crate::streams::TAG_PROMPT_INIT]);
    let prompt_init = PromptContext::seeded_init(
        DEFAULT_PROMPT_TOKENS,
        weights.token_dim(),
        &mut prompt_rng,
    );
    let vocab = derive_vocabulary(&prototypes, &weights, &prompt_init, params.seed)?;

    let mut shift_rng = stream_rng(params.seed, &[TAG_TASK_SHIFT]);
    let bias = bias_vector(params.input_dim, params.bias_scale, &mut shift_rng);

    let samples = (0..params.n_test)
        .map(|i| {
            let mut rng = stream_rng(params.seed, &[TAG_TASK_SAMPLES, i as u64]);
            let label = rng.gen_range(0..params.classes);
            let mut raw = prototypes[label].clone();
            for (r, n) in raw
                .iter_mut()
                .zip(gaussian_vec(params.input_dim, params.noise_scale, &mut rng))
            {
                *r += n;
            }
            let mut shifted = rotate_pairs(&raw, params.shift_angle);
            for (s, &b) in shifted.iter_mut().zip(&bias) {
                *s += b;
            }
            ImageSample::labeled(shifted, label)
        })
        .collect();

    Ok(SyntheticTask {
        prototypes,
        samples,
        weights,
        vocab,
        prompt_init,
        seed: params.seed,
    })
}

// ---------------------------------------------------------------------------
// Task file format
// ---------------------------------------------------------------------------

impl SyntheticTask {
    /// Textual task format: line 1 is `K D_in n_test seed`, then K prototype
    /// rows, then `n_test` rows of `label v_1 ... v_D`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let d = self.prototypes[0].len();
        out.push_str(&format!(
            "{} {} {} {}\n",
            self.prototypes.len(),
            d,
            self.samples.len(),
            self.seed
        ));
        for p in &self.prototypes {
            let row: Vec<String> = p.iter().map(|x| format!("{x}")).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        for s in &self.samples {
            let label = s.label.expect("synthetic samples are labeled");
            let mut row = vec![format!("{label}")];
            row.extend(s.raw.iter().map(|x| format!("{x}")));
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    /// Parses [`Self::to_text`] output, re-deriving weights, prompt, and
    /// vocabulary from the stored seed and prototypes.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::TaskFormat("missing header line".into()))?;
        let head: Vec<&str> = header.split_whitespace().collect();
        if head.len() != 4 {
            return Err(Error::TaskFormat(format!(
                "header must be 'K D_in n_test seed', got '{header}'"
            )));
        }
        let parse_usize = |s: &str, what: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::TaskFormat(format!("bad {what}: '{s}'")))
        };
        let k = parse_usize(head[0], "class count")?;
        let d = parse_usize(head[1], "input dim")?;
        let n_test = parse_usize(head[2], "sample count")?;
        let seed = head[3]
            .parse::<u64>()
            .map_err(|_| Error::TaskFormat(format!("bad seed: '{}'", head[3])))?;

        let parse_floats = |line: &str, expect: usize, what: &str| -> Result<Vec<f64>> {
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|_| Error::TaskFormat(format!("bad float '{t}' in {what}")))
                })
                .collect::<Result<_>>()?;
            if vals.len() != expect {
                return Err(Error::TaskFormat(format!(
                    "{what}: expected {expect} values, got {}",
                    vals.len()
                )));
            }
            Ok(vals)
        };

        let mut prototypes = Vec::with_capacity(k);
        for _ in 0..k {
            let line = lines
                .next()
                .ok_or_else(|| Error::TaskFormat("missing prototype row".into()))?;
            prototypes.push(parse_floats(line, d, "prototype row")?);
        }
        let mut samples = Vec::with_capacity(n_test);
        for _ in 0..n_test {
            let line = lines
                .next()
                .ok_or_else(|| Error::TaskFormat("missing sample row".into()))?;
            let vals = parse_floats(line, d + 1, "sample row")?;
            let label = vals[0] as usize;
            if vals[0].fract() != 0.0 || label >= k {
                return Err(Error::TaskFormat(format!("bad label {}", vals[0])));
            }
            samples.push(ImageSample::labeled(vals[1..].to_vec(), label));
        }
        if lines.next().is_some() {
            return Err(Error::TaskFormat("trailing rows after samples".into()));
        }

        let mut weight_rng = stream_rng(seed, &[crate::streams::TAG_ENCODER_WEIGHTS]);
        let weights = EncoderWeights::seeded(
            d,
            DEFAULT_FEATURE_DIM,
            DEFAULT_TOKEN_DIM,
            DEFAULT_TEMPERATURE,
            &mut weight_rng,
        )?;
        let mut prompt_rng = stream_rng(seed, &[crate::streams::TAG_PROMPT_INIT]);
        let prompt_init = PromptContext::seeded_init(
            DEFAULT_PROMPT_TOKENS,
            weights.token_dim(),
            &mut prompt_rng,
        );
        let vocab = derive_vocabulary(&prototypes, &weights, &prompt_init, seed)?;
        Ok(Self {
            prototypes,
            samples,
            weights,
            vocab,
            prompt_init,
            seed,
        })
    }
}

// ---------------------------------------------------------------------------
// Methods
// ---------------------------------------------------------------------------

/// The three pipelines the benchmark compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    /// Untuned prediction on the test sample.
    ZeroShot,
    /// Entropy-based confidence selection over standard views only.
    TptStandard,
    /// Pooled standard plus generated views with both filters.
    DiffTpt,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::ZeroShot, Method::TptStandard, Method::DiffTpt];

    pub fn label(&self) -> &'static str {
        match self {
            Method::ZeroShot => "zero_shot",
            Method::TptStandard => "tpt_standard",
            Method::DiffTpt => "difftpt",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        match s.trim().to_ascii_lowercase().as_str() {
            "zero_shot" | "zeroshot" => Some(Method::ZeroShot),
            "tpt_standard" | "tpt" => Some(Method::TptStandard),
            "difftpt" => Some(Method::DiffTpt),
            _ => None,
        }
    }
}

/// Augmentation and tuning knobs shared by a benchmark run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct RunParameters {
    pub aug: AugmentConfig,
    pub tuning: TuningConfig,
}

impl RunParameters {
    /// The effective configs for one method. The entropy-only pipeline drops
    /// generated views and disables the cosine filter.
    fn for_method(&self, method: Method) -> Self {
        match method {
            Method::TptStandard => Self {
                aug: AugmentConfig {
                    n_diffusion: 0,
                    ..self.aug.clone()
                },
                tuning: TuningConfig {
                    rho_c: 1.0,
                    ..self.tuning.clone()
                },
            },
            _ => self.clone(),
        }
    }
}

/// Outcome for one sample under one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub sample_index: usize,
    pub label: usize,
    pub predicted: usize,
    pub correct: bool,
    /// Final marginal entropy (tuned methods) or prediction entropy
    /// (zero-shot).
    pub entropy: f64,
    pub report: Option<AdaptationReport>,
}

/// Aggregate outcome for one method on one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkResult {
    pub method: Method,
    pub accuracy: f64,
    pub mean_entropy: f64,
    pub n_samples: usize,
    pub seeds: Vec<u64>,
    pub config: RunParameters,
    /// Tasks are synthetic stand-ins for the reference image benchmarks.
    pub synthetic: bool,
}

/// One method on one task: aggregate plus per-sample records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRun {
    pub result: BenchmarkResult,
    pub samples: Vec<SampleRecord>,
}

/// Runs `method` on every sample of `task`. Episodes parallelize over the
/// ambient rayon pool; records come back in sample order regardless of the
/// worker count.
pub fn run_method(method: Method, task: &SyntheticTask, params: &RunParameters) -> Result<MethodRun> {
    let effective = params.for_method(method);
    let samples: Vec<SampleRecord> = task
        .samples
        .par_iter()
        .enumerate()
        .map(|(i, sample)| -> Result<SampleRecord> {
            let label = sample.label.expect("synthetic samples are labeled");
            let (predicted, entropy, report) = match method {
                Method::ZeroShot => {
                    let probs = zero_shot_probabilities(
                        sample,
                        &task.prompt_init,
                        &task.vocab,
                        &task.weights,
                    )?;
                    (probs.argmax(), shannon_entropy(&probs), None)
                }
                Method::TptStandard | Method::DiffTpt => {
                    let report = adapt(
                        sample,
                        &task.prompt_init,
                        &task.vocab,
                        &task.weights,
                        &effective.aug,
                        &effective.tuning,
                        i as u64,
                    )?;
                    (report.predicted, report.entropy_after, Some(report))
                }
            };
            Ok(SampleRecord {
                sample_index: i,
                label,
                predicted,
                correct: predicted == label,
                entropy,
                report,
            })
        })
        .collect::<Result<_>>()?;

    let n = samples.len();
    let accuracy = samples.iter().filter(|s| s.correct).count() as f64 / n as f64;
    let mean_entropy = samples.iter().map(|s| s.entropy).sum::<f64>() / n as f64;
    Ok(MethodRun {
        result: BenchmarkResult {
            method,
            accuracy,
            mean_entropy,
            n_samples: n,
            seeds: vec![task.seed],
            config: effective,
            synthetic: true,
        },
        samples,
    })
}

/// Per-seed accuracies and their aggregate for one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodAggregate {
    pub method: Method,
    pub mean_accuracy: f64,
    /// Standard error of the per-seed accuracies.
    pub std_error: f64,
    pub mean_entropy: f64,
    pub per_seed_accuracy: Vec<f64>,
    pub seeds: Vec<u64>,
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Standard error of the mean, with the unbiased variance estimate.
pub fn standard_error(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64;
    (var / xs.len() as f64).sqrt()
}

/// Runs one method over tasks seeded `base_seed .. base_seed + n_seeds`,
/// generating each task from `params_base` with only the seed varied. The
/// augmentation seed follows the task seed.
pub fn run_method_over_seeds(
    method: Method,
    params_base: &TaskParams,
    n_seeds: usize,
    run_params: &RunParameters,
) -> Result<(MethodAggregate, Vec<MethodRun>)> {
    if n_seeds == 0 {
        return Err(Error::InvalidTask("n_seeds must be positive".into()));
    }
    let mut runs = Vec::with_capacity(n_seeds);
    for offset in 0..n_seeds as u64 {
        let seed = params_base.seed.wrapping_add(offset);
        let task = make_synthetic_task(&TaskParams {
            seed,
            ..params_base.clone()
        })?;
        let params = RunParameters {
            aug: AugmentConfig {
                seed,
                ..run_params.aug.clone()
            },
            tuning: run_params.tuning.clone(),
        };
        runs.push(run_method(method, &task, &params)?);
    }
    let per_seed_accuracy: Vec<f64> = runs.iter().map(|r| r.result.accuracy).collect();
    let seeds: Vec<u64> = runs.iter().map(|r| r.result.seeds[0]).collect();
    let mean_entropy = mean(&runs.iter().map(|r| r.result.mean_entropy).collect::<Vec<_>>());
    Ok((
        MethodAggregate {
            method,
            mean_accuracy: mean(&per_seed_accuracy),
            std_error: standard_error(&per_seed_accuracy),
            mean_entropy,
            per_seed_accuracy,
            seeds,
        },
        runs,
    ))
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

/// One sweep axis: a name and the requested grid values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepAxis {
    pub name: String,
    pub values: Vec<f64>,
}

/// Accuracy over a 1-D or 2-D grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub axes: Vec<SweepAxis>,
    /// Rows follow `axes[0]`; columns follow `axes[1]` or collapse to 1.
    pub accuracy: Vec<Vec<f64>>,
}

/// Scalar ablation axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepAxisKind {
    RhoH,
    RhoC,
    NumViews,
    Steps,
}

impl SweepAxisKind {
    pub fn label(&self) -> &'static str {
        match self {
            SweepAxisKind::RhoH => "rho_H",
            SweepAxisKind::RhoC => "rho_C",
            SweepAxisKind::NumViews => "num_views",
            SweepAxisKind::Steps => "steps",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rho_h" => Some(SweepAxisKind::RhoH),
            "rho_c" => Some(SweepAxisKind::RhoC),
            "num_views" => Some(SweepAxisKind::NumViews),
            "steps" => Some(SweepAxisKind::Steps),
            _ => None,
        }
    }
}

/// Accuracy of the full engine over a grid of view-family proportions. Each
/// cell `(sf, df)` uses `round(sf * T)` standard and `round(df * T)`
/// generated views, with the budget `T = n_standard + n_diffusion` held
/// fixed across cells.
pub fn sweep_mix_ratio(
    task: &SyntheticTask,
    standard_fractions: &[f64],
    diffusion_fractions: &[f64],
    params: &RunParameters,
) -> Result<SweepResult> {
    if standard_fractions.is_empty() || diffusion_fractions.is_empty() {
        return Err(Error::EmptyInput);
    }
    for &f in standard_fractions.iter().chain(diffusion_fractions) {
        if !(0.0..=1.0).contains(&f) {
            return Err(Error::InvalidAxisValue {
                axis: "mix_ratio".into(),
                value: f,
            });
        }
    }
    let budget = (params.aug.n_standard + params.aug.n_diffusion) as f64;
    let mut accuracy = Vec::with_capacity(standard_fractions.len());
    for &sf in standard_fractions {
        let mut row = Vec::with_capacity(diffusion_fractions.len());
        for &df in diffusion_fractions {
            let cell_params = RunParameters {
                aug: AugmentConfig {
                    n_standard: (sf * budget).round() as usize,
                    n_diffusion: (df * budget).round() as usize,
                    ..params.aug.clone()
                },
                tuning: params.tuning.clone(),
            };
            row.push(run_method(Method::DiffTpt, task, &cell_params)?.result.accuracy);
        }
        accuracy.push(row);
    }
    Ok(SweepResult {
        axes: vec![
            SweepAxis {
                name: "standard_fraction".into(),
                values: standard_fractions.to_vec(),
            },
            SweepAxis {
                name: "diffusion_fraction".into(),
                values: diffusion_fractions.to_vec(),
            },
        ],
        accuracy,
    })
}

/// Accuracy of the full engine along one scalar axis, all other knobs at
/// their configured values. `num_views` counts the total batch including the
/// original view; the augmented remainder splits near-evenly with the extra
/// view going to the standard family (128 -> 64 standard + 63 generated).
pub fn sweep_scalar(
    axis: SweepAxisKind,
    values: &[f64],
    task: &SyntheticTask,
    params: &RunParameters,
) -> Result<SweepResult> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut accuracy = Vec::with_capacity(values.len());
    for &v in values {
        let bad = |axis: SweepAxisKind| Error::InvalidAxisValue {
            axis: axis.label().into(),
            value: v,
        };
        let mut cell = params.clone();
        match axis {
            SweepAxisKind::RhoH => {
                if !(v > 0.0 && v <= 1.0) {
                    return Err(bad(axis));
                }
                cell.tuning.rho_h = v;
            }
            SweepAxisKind::RhoC => {
                if !(v > 0.0 && v <= 1.0) {
                    return Err(bad(axis));
                }
                cell.tuning.rho_c = v;
            }
            SweepAxisKind::NumViews => {
                if v < 1.0 || v.fract() != 0.0 {
                    return Err(bad(axis));
                }
                let total = v as usize - 1;
                cell.aug.n_diffusion = total / 2;
                cell.aug.n_standard = total - total / 2;
            }
            SweepAxisKind::Steps => {
                if v < 0.0 || v.fract() != 0.0 {
                    return Err(bad(axis));
                }
                cell.tuning.steps = v as usize;
            }
        }
        accuracy.push(vec![run_method(Method::DiffTpt, task, &cell)?.result.accuracy]);
    }
    Ok(SweepResult {
        axes: vec![SweepAxis {
            name: axis.label().into(),
            values: values.to_vec(),
        }],
        accuracy,
    })
}

impl SweepResult {
    /// CSV form: scalar sweeps emit `axis,accuracy` rows; grids emit a matrix
    /// whose corner cell is `rows\cols`. `header_lines` go first, each
    /// prefixed with `# `.
    pub fn to_csv(&self, header_lines: &[String]) -> String {
        let mut out = String::new();
        for line in header_lines {
            out.push_str(&format!("# {line}\n"));
        }
        match self.axes.len() {
            1 => {
                out.push_str(&format!("{},accuracy\n", self.axes[0].name));
                for (v, row) in self.axes[0].values.iter().zip(&self.accuracy) {
                    out.push_str(&format!("{v},{}\n", row[0]));
                }
            }
            _ => {
                let cols: Vec<String> = self.axes[1]
                    .values
                    .iter()
                    .map(|v| format!("{v}"))
                    .collect();
                out.push_str(&format!(
                    "{}\\{},{}\n",
                    self.axes[0].name,
                    self.axes[1].name,
                    cols.join(",")
                ));
                for (v, row) in self.axes[0].values.iter().zip(&self.accuracy) {
                    let cells: Vec<String> = row.iter().map(|a| format!("{a}")).collect();
                    out.push_str(&format!("{v},{}\n", cells.join(",")));
                }
            }
        }
        out
    }

    /// Parses [`Self::to_csv`] output, ignoring `#` comment lines.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim_end)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines
            .next()
            .ok_or_else(|| Error::SweepFormat("missing header".into()))?;
        let head: Vec<&str> = header.split(',').collect();
        if head.len() < 2 {
            return Err(Error::SweepFormat(format!("bad header '{header}'")));
        }
        let parse_f64 = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::SweepFormat(format!("bad float '{s}'")))
        };
        if head.len() == 2 && head[1] == "accuracy" && !head[0].contains('\\') {
            let mut values = Vec::new();
            let mut accuracy = Vec::new();
            for line in lines {
                let cells: Vec<&str> = line.split(',').collect();
                if cells.len() != 2 {
                    return Err(Error::SweepFormat(format!("bad row '{line}'")));
                }
                values.push(parse_f64(cells[0])?);
                accuracy.push(vec![parse_f64(cells[1])?]);
            }
            if values.is_empty() {
                return Err(Error::SweepFormat("no rows".into()));
            }
            return Ok(Self {
                axes: vec![SweepAxis {
                    name: head[0].to_string(),
                    values,
                }],
                accuracy,
            });
        }
        let (row_name, col_name) = head[0]
            .split_once('\\')
            .ok_or_else(|| Error::SweepFormat(format!("bad corner cell '{}'", head[0])))?;
        let col_values: Vec<f64> = head[1..]
            .iter()
            .map(|s| parse_f64(s))
            .collect::<Result<_>>()?;
        let mut row_values = Vec::new();
        let mut accuracy = Vec::new();
        for line in lines {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != col_values.len() + 1 {
                return Err(Error::SweepFormat(format!("ragged row '{line}'")));
            }
            row_values.push(parse_f64(cells[0])?);
            accuracy.push(
                cells[1..]
                    .iter()
                    .map(|s| parse_f64(s))
                    .collect::<Result<_>>()?,
            );
        }
        if row_values.is_empty() {
            return Err(Error::SweepFormat("no rows".into()));
        }
        Ok(Self {
            axes: vec![
                SweepAxis {
                    name: row_name.to_string(),
                    values: row_values,
                },
                SweepAxis {
                    name: col_name.to_string(),
                    values: col_values,
                },
            ],
            accuracy,
        })
    }
}
