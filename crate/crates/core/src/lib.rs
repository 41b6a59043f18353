//! Per-sample test-time prompt tuning for a dual-encoder classifier.
//!
//! Given a single unlabeled test input, the engine builds a pool of augmented
//! views (a stochastic crop augmenter plus a feature-conditioned generative
//! surrogate), filters them by prediction confidence and by cosine fidelity
//! to the original sample, and minimizes the entropy of the filtered marginal
//! prediction over a handful of learnable prompt tokens. A synthetic
//! distribution-shift benchmark and ablation sweeps sit on top, along with
//! runtime audit suites for the analytic gradient and the selection kernels.

pub mod audit;
pub mod augment;
pub mod benchmark;
pub mod encoder;
pub mod error;
pub mod numerics;
pub mod selection;
pub mod streams;
pub mod tuner;

pub use augment::{assemble_view_batch, AugmentConfig, ViewBatch, ViewSource};
pub use encoder::{
    encode_image, encode_text, ClassVocabulary, EncoderWeights, FeatureEmbedding, ImageSample,
    PromptContext,
};
pub use error::{Error, Result};
pub use numerics::{KeepDirection, ProbabilityVector, SelectionMask};
pub use selection::{RemovalCategory, SelectionDiagnostics};
pub use tuner::{adapt, zero_shot_predict, AdaptationReport, PredictionRule, TuningConfig};
pub use benchmark::{
    make_synthetic_task, run_method, run_method_over_seeds, sweep_mix_ratio, sweep_scalar,
    Method, MethodAggregate, MethodRun, RunParameters, SweepAxisKind, SweepResult, SyntheticTask,
    TaskParams,
};
