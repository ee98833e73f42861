//! Reverse-time sampling with run-time condition mixing.
//!
//! The chain starts from `X_1 ~ N(0, I)` and applies the discretized reverse
//! SDE step at `t = i/N` for `i = N, …, 1`. A [`MixSpec`] splits the chain
//! into three contiguous phases: the base condition alone while
//! `t > k_max`, the weighted score combination `Σ γ_i s(x, t, e_i)` while
//! `k_min < t ≤ k_max`, and the mixed-in condition(s) alone for `t ≤ k_min`.

use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::schedule::{NoiseSchedule, HORIZON};
use crate::score_models::{ConditionEmbedding, ScoreModel};

/// Upper bound on the total mixed-in weight when cap validation is on.
pub const MAX_MIXIN_WEIGHT: f64 = 0.8;

const WEIGHT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    /// Number of reverse steps `N`; the step size is `1/N`.
    pub steps: usize,
    /// Set by the caller; not part of the config file.
    #[serde(skip)]
    pub seed: u64,
    /// Smallest time at which a score is evaluated.
    pub time_floor: f64,
    /// Use `z = 0` on the last step.
    pub zero_final_noise: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            steps: 10,
            seed: 0,
            time_floor: 1e-3,
            zero_final_noise: true,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Validation {
                item: "SamplerConfig",
                reason: "steps must be >= 1".into(),
            });
        }
        if !(self.time_floor > 0.0 && self.time_floor < HORIZON) {
            return Err(Error::Validation {
                item: "SamplerConfig",
                reason: format!("time_floor {} must lie in (0, 1)", self.time_floor),
            });
        }
        Ok(())
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn with_steps(self, steps: usize) -> Self {
        Self { steps, ..self }
    }

    /// Evaluation time of step `k` (`k = 0` is the first step, `t = 1`).
    fn time_at(&self, k: usize) -> f64 {
        let i = self.steps - k;
        (i as f64 / self.steps as f64).max(self.time_floor)
    }
}

/// One Euler–Maruyama step of the reverse SDE:
/// `x + (β_t/N)(x/2 + score) + sqrt(β_t/N) z`.
pub fn reverse_step(
    x: &[f64],
    t: f64,
    score: &[f64],
    schedule: &NoiseSchedule,
    steps: usize,
    z: &[f64],
) -> Result<Vec<f64>> {
    check_dim("reverse_step score", x.len(), score.len())?;
    check_dim("reverse_step noise", x.len(), z.len())?;
    if t <= 0.0 {
        return Err(Error::Domain {
            what: "t",
            value: t,
            range: "(0, 1]",
        });
    }
    let h = schedule.beta_at(t)? / steps as f64;
    let sd = h.sqrt();
    Ok(x.iter()
        .zip(score)
        .zip(z)
        .map(|((xi, si), zi)| xi + h * (0.5 * xi + si) + sd * zi)
        .collect())
}

/// Deterministic per-sample RNG: stream `index` of the seed's ChaCha8 family.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn standard_normal(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

/// Runs the full reverse chain; `score_at(k, x, t)` supplies the score for
/// step `k`.
fn run_chain<F>(
    schedule: &NoiseSchedule,
    dim: usize,
    cfg: &SamplerConfig,
    rng: &mut ChaCha8Rng,
    mut score_at: F,
) -> Result<Vec<f64>>
where
    F: FnMut(usize, &[f64], f64) -> Result<Vec<f64>>,
{
    cfg.validate()?;
    let mut x = standard_normal(rng, dim);
    for k in 0..cfg.steps {
        let t = cfg.time_at(k);
        let score = score_at(k, &x, t)?;
        let last = k + 1 == cfg.steps;
        let z = if last && cfg.zero_final_noise {
            vec![0.0; dim]
        } else {
            standard_normal(rng, dim)
        };
        x = reverse_step(&x, t, &score, schedule, cfg.steps, &z)?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { step: k + 1, t });
        }
    }
    Ok(x)
}

/// Single-condition sample using RNG stream 0 of `cfg.seed`.
pub fn sample<M: ScoreModel + ?Sized>(
    model: &M,
    schedule: &NoiseSchedule,
    embedding: &[f64],
    cfg: &SamplerConfig,
) -> Result<Vec<f64>> {
    sample_indexed(model, schedule, embedding, cfg, 0)
}

fn sample_indexed<M: ScoreModel + ?Sized>(
    model: &M,
    schedule: &NoiseSchedule,
    embedding: &[f64],
    cfg: &SamplerConfig,
    index: u64,
) -> Result<Vec<f64>> {
    let mut rng = stream_rng(cfg.seed, index);
    run_chain(schedule, model.dim(), cfg, &mut rng, |_, x, t| {
        model.score(x, t, embedding)
    })
}

/// `n` independent single-condition samples; sample `i` uses stream `i`.
pub fn sample_batch<M: ScoreModel + ?Sized>(
    model: &M,
    schedule: &NoiseSchedule,
    embedding: &[f64],
    cfg: &SamplerConfig,
    n: usize,
) -> Result<Vec<Vec<f64>>> {
    (0..n as u64)
        .into_par_iter()
        .map(|i| sample_indexed(model, schedule, embedding, cfg, i))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixComponent {
    pub embedding: ConditionEmbedding,
    pub weight: f64,
}

/// Which score source a reverse step uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    Base,
    Combined,
    MixIn,
}

impl Phase {
    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::Base => "base",
            Phase::Combined => "combined",
            Phase::MixIn => "mixin",
        }
    }
}

/// Per-step phase assignment, in sampling order (first entry is `t = 1`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhasePlan {
    phases: Vec<Phase>,
}

impl PhasePlan {
    /// Half-open boundaries: `t > k_max` is base, `k_min < t ≤ k_max` is
    /// combined, `t ≤ k_min` is mix-in, with `t = i/N`.
    pub fn new(steps: usize, k_max: f64, k_min: f64) -> Self {
        let phases = (0..steps)
            .map(|k| {
                let t = (steps - k) as f64 / steps as f64;
                if t > k_max {
                    Phase::Base
                } else if t > k_min {
                    Phase::Combined
                } else {
                    Phase::MixIn
                }
            })
            .collect();
        Self { phases }
    }

    fn uniform(steps: usize, phase: Phase) -> Self {
        Self {
            phases: vec![phase; steps],
        }
    }

    pub fn phases(&self) -> &[Phase] {
        &self.phases
    }

    pub fn count(&self, phase: Phase) -> usize {
        self.phases.iter().filter(|p| **p == phase).count()
    }
}

/// Weighted condition mixture with phase boundaries.
#[derive(Debug, Clone, PartialEq)]
pub struct MixSpec {
    components: Vec<MixComponent>,
    base: usize,
    k_max: f64,
    k_min: f64,
    combined_in_mixin: bool,
}

impl MixSpec {
    /// Validates `Σγ = 1`, `γ ≥ 0`, `0 ≤ k_min ≤ k_max ≤ 1`, and, when
    /// `enforce_cap` is set, total mixed-in weight `≤ 0.8`.
    pub fn new(
        components: Vec<MixComponent>,
        base: usize,
        k_max: f64,
        k_min: f64,
        enforce_cap: bool,
    ) -> Result<Self> {
        let invalid = |reason: String| Error::Validation {
            item: "MixSpec",
            reason,
        };
        if components.is_empty() {
            return Err(invalid("at least one component required".into()));
        }
        if base >= components.len() {
            return Err(invalid(format!(
                "base index {base} out of range for {} components",
                components.len()
            )));
        }
        let dim = components[0].embedding.dim();
        for c in &components {
            if !(c.weight.is_finite() && c.weight >= 0.0) {
                return Err(invalid(format!(
                    "weight {} for '{}' must be finite and nonnegative",
                    c.weight, c.embedding.label
                )));
            }
            check_dim("MixSpec embedding", dim, c.embedding.dim())?;
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > WEIGHT_TOLERANCE {
            return Err(invalid(format!("weights sum to {total}, expected 1")));
        }
        if !(0.0..=HORIZON).contains(&k_min) || !(0.0..=HORIZON).contains(&k_max) || k_min > k_max {
            return Err(invalid(format!(
                "phase bounds must satisfy 0 <= k_min ({k_min}) <= k_max ({k_max}) <= 1"
            )));
        }
        let spec = Self {
            components,
            base,
            k_max,
            k_min,
            combined_in_mixin: false,
        };
        if enforce_cap && spec.mixin_weight() > MAX_MIXIN_WEIGHT + WEIGHT_TOLERANCE {
            return Err(invalid(format!(
                "mixed-in weight {} exceeds {MAX_MIXIN_WEIGHT}",
                spec.mixin_weight()
            )));
        }
        Ok(spec)
    }

    /// Two-condition mixture `((base, 1 - γ), (mixin, γ))`.
    pub fn dual(
        base: ConditionEmbedding,
        mixin: ConditionEmbedding,
        gamma: f64,
        k_max: f64,
        k_min: f64,
        enforce_cap: bool,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::Validation {
                item: "MixSpec",
                reason: format!("mixing weight {gamma} outside [0, 1]"),
            });
        }
        Self::new(
            vec![
                MixComponent {
                    embedding: base,
                    weight: 1.0 - gamma,
                },
                MixComponent {
                    embedding: mixin,
                    weight: gamma,
                },
            ],
            0,
            k_max,
            k_min,
            enforce_cap,
        )
    }

    /// Use the full combination instead of the mixed-in conditions alone
    /// for `t ≤ k_min`.
    pub fn with_combined_in_mixin(mut self, on: bool) -> Self {
        self.combined_in_mixin = on;
        self
    }

    pub fn components(&self) -> &[MixComponent] {
        &self.components
    }

    pub fn base(&self) -> &MixComponent {
        &self.components[self.base]
    }

    pub fn base_index(&self) -> usize {
        self.base
    }

    pub fn k_max(&self) -> f64 {
        self.k_max
    }

    pub fn k_min(&self) -> f64 {
        self.k_min
    }

    /// Total weight of the non-base components.
    pub fn mixin_weight(&self) -> f64 {
        self.components
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != self.base)
            .map(|(_, c)| c.weight)
            .sum()
    }

    /// Short descriptor such as `Happy:0.7+Surprise:0.3`.
    pub fn descriptor(&self) -> String {
        self.components
            .iter()
            .map(|c| format!("{}:{}", c.embedding.label, c.weight))
            .collect::<Vec<_>>()
            .join("+")
    }

    /// Phase plan for an `N`-step chain. With no mixed-in weight the
    /// plan is base-only.
    pub fn plan(&self, steps: usize) -> PhasePlan {
        if self.mixin_weight() == 0.0 {
            PhasePlan::uniform(steps, Phase::Base)
        } else {
            PhasePlan::new(steps, self.k_max, self.k_min)
        }
    }
}

/// Weighted score combination `Σ γ_i s(x, t, e_i)` over `terms`; zero-weight
/// terms are skipped.
fn weighted_score<'a, M, I>(model: &M, x: &[f64], t: f64, terms: I) -> Result<Vec<f64>>
where
    M: ScoreModel + ?Sized,
    I: IntoIterator<Item = (&'a [f64], f64)>,
{
    let mut out = vec![0.0; x.len()];
    for (embedding, weight) in terms {
        if weight == 0.0 {
            continue;
        }
        let s = model.score(x, t, embedding)?;
        check_dim("model output", x.len(), s.len())?;
        for (o, v) in out.iter_mut().zip(&s) {
            *o += weight * v;
        }
    }
    Ok(out)
}

/// `Σ γ_i s(x, t, e_i)` over all components of `mix`.
pub fn combined_noise<M: ScoreModel + ?Sized>(
    model: &M,
    x: &[f64],
    t: f64,
    mix: &MixSpec,
) -> Result<Vec<f64>> {
    weighted_score(
        model,
        x,
        t,
        mix.components
            .iter()
            .map(|c| (c.embedding.vector.as_slice(), c.weight)),
    )
}

fn mixin_score<M: ScoreModel + ?Sized>(
    model: &M,
    x: &[f64],
    t: f64,
    mix: &MixSpec,
) -> Result<Vec<f64>> {
    let total = mix.mixin_weight();
    weighted_score(
        model,
        x,
        t,
        mix.components
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != mix.base)
            .map(|(_, c)| (c.embedding.vector.as_slice(), c.weight / total)),
    )
}

fn phase_score<M: ScoreModel + ?Sized>(
    model: &M,
    x: &[f64],
    t: f64,
    mix: &MixSpec,
    phase: Phase,
) -> Result<Vec<f64>> {
    match phase {
        Phase::Base => model.score(x, t, &mix.base().embedding.vector),
        Phase::Combined => combined_noise(model, x, t, mix),
        Phase::MixIn if mix.combined_in_mixin => combined_noise(model, x, t, mix),
        Phase::MixIn => mixin_score(model, x, t, mix),
    }
}

fn sample_mixed_indexed<M: ScoreModel + ?Sized>(
    model: &M,
    schedule: &NoiseSchedule,
    mix: &MixSpec,
    cfg: &SamplerConfig,
    index: u64,
) -> Result<Vec<f64>> {
    let plan = mix.plan(cfg.steps);
    let mut rng = stream_rng(cfg.seed, index);
    run_chain(schedule, model.dim(), cfg, &mut rng, |k, x, t| {
        phase_score(model, x, t, mix, plan.phases[k])
    })
}

/// Mixed-condition sample using RNG stream 0 of `cfg.seed`.
pub fn sample_mixed<M: ScoreModel + ?Sized>(
    model: &M,
    schedule: &NoiseSchedule,
    mix: &MixSpec,
    cfg: &SamplerConfig,
) -> Result<Vec<f64>> {
    sample_mixed_indexed(model, schedule, mix, cfg, 0)
}

/// `n` mixed-condition samples; sample `i` uses stream `i`.
pub fn sample_mixed_batch<M: ScoreModel + ?Sized>(
    model: &M,
    schedule: &NoiseSchedule,
    mix: &MixSpec,
    cfg: &SamplerConfig,
    n: usize,
) -> Result<Vec<Vec<f64>>> {
    sample_mixed_streams(model, schedule, mix, cfg, 0..n as u64)
}

/// One mixed-condition sample per RNG stream index in `streams`.
pub fn sample_mixed_streams<M: ScoreModel + ?Sized>(
    model: &M,
    schedule: &NoiseSchedule,
    mix: &MixSpec,
    cfg: &SamplerConfig,
    streams: Range<u64>,
) -> Result<Vec<Vec<f64>>> {
    streams
        .into_par_iter()
        .map(|i| sample_mixed_indexed(model, schedule, mix, cfg, i))
        .collect()
}

/// Phase boundaries shared by intensity and curve experiments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseBounds {
    pub k_max: f64,
    pub k_min: f64,
}

impl Default for PhaseBounds {
    fn default() -> Self {
        Self {
            k_max: 0.6,
            k_min: 0.2,
        }
    }
}

/// Intensity control: Neutral as base mixed with `target` at weight `gamma`.
/// `gamma` must lie in `[0, 0.8]` unless `relax_cap` is set.
pub fn intensity_mix(
    neutral: &ConditionEmbedding,
    target: &ConditionEmbedding,
    gamma: f64,
    bounds: PhaseBounds,
    relax_cap: bool,
) -> Result<MixSpec> {
    MixSpec::dual(
        neutral.clone(),
        target.clone(),
        gamma,
        bounds.k_max,
        bounds.k_min,
        !relax_cap,
    )
}

#[allow(clippy::too_many_arguments)]
pub fn intensity_sample<M: ScoreModel + ?Sized>(
    model: &M,
    schedule: &NoiseSchedule,
    neutral: &ConditionEmbedding,
    target: &ConditionEmbedding,
    gamma: f64,
    bounds: PhaseBounds,
    relax_cap: bool,
    cfg: &SamplerConfig,
) -> Result<Vec<f64>> {
    let mix = intensity_mix(neutral, target, gamma, bounds, relax_cap)?;
    sample_mixed(model, schedule, &mix, cfg)
}
