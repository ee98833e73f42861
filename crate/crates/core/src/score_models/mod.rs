//! Score evaluation contract and its two implementations.
//!
//! A [`ScoreModel`] maps `(x, t, e)` to an estimate of `∇_x log p_t(x | e)`.
//! [`AnalyticScoreModel`] evaluates the exact score of a Gaussian-mixture
//! condition pushed through the forward process; [`MlpScoreNetwork`] is a
//! small trainable approximation of the same quantity.

mod analytic;
mod embedding;
mod mlp;

pub use analytic::{
    default_layout, AnalyticScoreModel, ConditionedDistribution, GaussianComponent,
};
pub use embedding::{embed_average, one_hot, ConditionEmbedding};
pub use mlp::{time_encoding, ForwardCache, MlpScoreNetwork, TIME_FEATURES};

use crate::error::Result;

/// Uniform evaluation contract `ε_θ(x, t, e)`.
///
/// Implementations are deterministic in their inputs and return a vector of
/// the same dimension as `x`.
pub trait ScoreModel: Sync {
    /// Data dimension `d`.
    fn dim(&self) -> usize;

    fn score(&self, x: &[f64], t: f64, embedding: &[f64]) -> Result<Vec<f64>>;
}

impl<M: ScoreModel + ?Sized> ScoreModel for &M {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn score(&self, x: &[f64], t: f64, embedding: &[f64]) -> Result<Vec<f64>> {
        (**self).score(x, t, embedding)
    }
}
