//! Conditional score-based diffusion sampling with run-time condition mixing.
//!
//! The crate is organised bottom-up:
//!
//! - [`schedule`]: linear noise schedule and the closed-form forward marginal.
//! - [`score_models`]: the `(x, t, e) -> score` contract, an exact
//!   Gaussian-mixture oracle and a small trainable MLP.
//! - [`training`]: denoising score-matching, prior and Gram-matrix style
//!   losses, and an Adam training loop.
//! - [`sampler`]: discretized reverse-SDE sampling, phase-scheduled condition
//!   switching and weighted score combination.
//! - [`probe`]: Bayes-posterior probe, probability curves and intensity
//!   confusion matrices.
//! - [`runner`]: config loading, seeded stream derivation and the experiment
//!   drivers behind the `mixdiff` binary.
//!
//! Runnable examples (`cargo run --example <name>`):
//!
//! - `schedule_marginals`: schedule table and forward-marginal draws.
//! - `analytic_score`: exact mixture scores against finite differences.
//! - `single_condition_sampling`: reverse-SDE sampling and moment checks.
//! - `mixed_emotion_sampling`: phase plan and probe output for a two-way mix.
//! - `intensity_control`: Neutral mixed with a target at increasing weight.
//! - `probability_curve`: probe probabilities across the weight grid.
//! - `intensity_confusion`: weak / medium / strong bucket separation.
//! - `train_score_network`: train the MLP, compare with the exact score,
//!   checkpoint and sample.
//! - `style_loss`: Gram matrices and the style loss gradient.
//! - `run_experiment`: the config-driven runner used by the binary.

pub mod error;
pub mod probe;
pub mod runner;
pub mod sampler;
pub mod schedule;
pub mod score_models;
pub mod training;

pub use error::{Error, Result};
pub use schedule::NoiseSchedule;
pub use score_models::{
    AnalyticScoreModel, ConditionEmbedding, ConditionedDistribution, MlpScoreNetwork, ScoreModel,
};
