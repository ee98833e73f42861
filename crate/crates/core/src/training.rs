//! Training objectives and the Adam loop for [`MlpScoreNetwork`].
//!
//! The total objective is `L_diff + L_prior + γ_style · L_style`:
//!
//! - `L_diff`: weighted denoising score matching against the conditional
//!   score `-λ(t)⁻¹ (x_t - α x0)`.
//! - `L_prior`: `½‖x0 - μ‖²` with `μ` the condition's mixture mean. It has
//!   no dependence on network parameters and is reported for completeness.
//! - `L_style`: squared Frobenius distance between Gram matrices of frozen
//!   feature maps of the one-step denoised estimate and the clean batch.

use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::schedule::{NoiseSchedule, HORIZON};
use crate::score_models::{
    AnalyticScoreModel, ConditionedDistribution, MlpScoreNetwork, ScoreModel,
};

/// Weight applied to each sample's squared score error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossWeighting {
    /// `λ(t)`
    Lambda,
    /// `1`
    Unit,
}

impl LossWeighting {
    fn weight(self, lambda: f64) -> f64 {
        match self {
            LossWeighting::Lambda => lambda,
            LossWeighting::Unit => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub style_weight: f64,
    /// Set by the caller; not part of the config file.
    #[serde(skip)]
    pub seed: u64,
    pub weighting: LossWeighting,
    /// Diffusion times are drawn from `(time_floor, 1]`.
    pub time_floor: f64,
    /// Style batches draw `t` from `(time_floor, style_time_max]`.
    pub style_time_max: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 32,
            steps: 5000,
            style_weight: 1e-4,
            seed: 0,
            weighting: LossWeighting::Lambda,
            time_floor: 1e-3,
            style_time_max: 0.5,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| {
            Err(Error::Validation {
                item: "TrainConfig",
                reason,
            })
        };
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return fail(format!("learning_rate {} must be >= 0", self.learning_rate));
        }
        if self.batch_size == 0 {
            return fail("batch_size must be >= 1".into());
        }
        if !(self.style_weight.is_finite() && self.style_weight >= 0.0) {
            return fail(format!("style_weight {} must be >= 0", self.style_weight));
        }
        if !(self.time_floor > 0.0 && self.time_floor < HORIZON) {
            return fail(format!("time_floor {} must lie in (0, 1)", self.time_floor));
        }
        if !(self.style_time_max > self.time_floor && self.style_time_max <= HORIZON) {
            return fail(format!(
                "style_time_max {} must lie in (time_floor, 1]",
                self.style_time_max
            ));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return fail("Adam moment decay rates must lie in [0, 1)".into());
        }
        if !(self.adam_epsilon > 0.0) {
            return fail("adam_epsilon must be positive".into());
        }
        Ok(())
    }
}

/// Time and noise for one denoising score-matching sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionDraw {
    pub t: f64,
    pub eps: Vec<f64>,
}

impl DiffusionDraw {
    /// `t ~ U(floor, 1]`, `ε ~ N(0, I)`.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R, dim: usize, floor: f64) -> Self {
        // 1 - U[0,1) lies in (0, 1]
        let u: f64 = rng.random();
        let t = floor + (HORIZON - floor) * (1.0 - u);
        let eps = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        Self { t, eps }
    }
}

/// Weighted squared error `w(t)‖s(x_t, t, e) + λ(t)⁻¹ (x_t - α x0)‖²`
/// averaged over the batch, using caller-supplied draws.
pub fn diffusion_loss_with_draws<M: ScoreModel + ?Sized>(
    model: &M,
    schedule: &NoiseSchedule,
    embedding: &[f64],
    x0: &[Vec<f64>],
    draws: &[DiffusionDraw],
    weighting: LossWeighting,
) -> Result<f64> {
    if x0.is_empty() {
        return Err(Error::Argument(
            "diffusion_loss needs a nonempty batch".into(),
        ));
    }
    check_dim("diffusion_loss draws", x0.len(), draws.len())?;
    let mut total = 0.0;
    for (x, d) in x0.iter().zip(draws) {
        let xt = schedule.forward_sample(x, d.t, &d.eps)?;
        let target = schedule.standard_score_target(&d.eps, d.t)?;
        let out = model.score(&xt, d.t, embedding)?;
        check_dim("diffusion_loss model output", target.len(), out.len())?;
        let sq: f64 = out.iter().zip(&target).map(|(o, g)| (o - g).powi(2)).sum();
        total += weighting.weight(schedule.lambda_var(d.t)?) * sq;
    }
    Ok(total / x0.len() as f64)
}

/// Monte Carlo diffusion loss on a batch of clean points of `dist`.
pub fn diffusion_loss<M: ScoreModel + ?Sized, R: Rng + ?Sized>(
    model: &M,
    dist: &ConditionedDistribution,
    schedule: &NoiseSchedule,
    x0: &[Vec<f64>],
    rng: &mut R,
    weighting: LossWeighting,
    time_floor: f64,
) -> Result<f64> {
    let draws: Vec<_> = x0
        .iter()
        .map(|x| DiffusionDraw::sample(rng, x.len(), time_floor))
        .collect();
    diffusion_loss_with_draws(
        model,
        schedule,
        &dist.condition().vector,
        x0,
        &draws,
        weighting,
    )
}

/// Mean of `½‖x0 - μ‖²` over the batch.
pub fn prior_loss(x0: &[Vec<f64>], mu: &[f64]) -> Result<f64> {
    if x0.is_empty() {
        return Err(Error::Argument("prior_loss needs a nonempty batch".into()));
    }
    let mut total = 0.0;
    for x in x0 {
        check_dim("prior_loss", mu.len(), x.len())?;
        total += 0.5 * x.iter().zip(mu).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    }
    Ok(total / x0.len() as f64)
}

/// `F Fᵀ / (C L)` for a `C × L` feature map.
pub fn gram_matrix(features: &Array2<f64>) -> Result<Array2<f64>> {
    let (c, l) = features.dim();
    if c == 0 || l == 0 {
        return Err(Error::Argument(format!("gram_matrix of empty {c}x{l} map")));
    }
    Ok(features.dot(&features.t()) / (c * l) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Tanh,
}

/// One 1-D convolution over the length axis with zero "same" padding.
/// Weights are `out × in × kernel`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
    activation: Activation,
}

impl FilterBank {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
        activation: Activation,
    ) -> Result<Self> {
        if in_channels == 0 || out_channels == 0 || kernel.is_multiple_of(2) {
            return Err(Error::Argument(
                "filter bank needs positive channels and an odd kernel".into(),
            ));
        }
        check_dim(
            "filter weights",
            out_channels * in_channels * kernel,
            weights.len(),
        )?;
        check_dim("filter bias", out_channels, bias.len())?;
        Ok(Self {
            in_channels,
            out_channels,
            kernel,
            weights,
            bias,
            activation,
        })
    }

    fn w(&self, o: usize, i: usize, k: usize) -> f64 {
        self.weights[(o * self.in_channels + i) * self.kernel + k]
    }

    fn forward(&self, input: &Array2<f64>) -> Array2<f64> {
        let len = input.ncols();
        let pad = (self.kernel / 2) as isize;
        let mut out = Array2::zeros((self.out_channels, len));
        for o in 0..self.out_channels {
            for l in 0..len {
                let mut z = self.bias[o];
                for i in 0..self.in_channels {
                    for k in 0..self.kernel {
                        let src = l as isize + k as isize - pad;
                        if src >= 0 && (src as usize) < len {
                            z += self.w(o, i, k) * input[[i, src as usize]];
                        }
                    }
                }
                out[[o, l]] = match self.activation {
                    Activation::Identity => z,
                    Activation::Tanh => z.tanh(),
                };
            }
        }
        out
    }

    /// Gradient with respect to the input given the gradient at the output.
    fn backward(
        &self,
        input: &Array2<f64>,
        output: &Array2<f64>,
        d_out: &Array2<f64>,
    ) -> Array2<f64> {
        let len = input.ncols();
        let pad = (self.kernel / 2) as isize;
        let mut d_in = Array2::zeros(input.raw_dim());
        for o in 0..self.out_channels {
            for l in 0..len {
                let dz = match self.activation {
                    Activation::Identity => d_out[[o, l]],
                    Activation::Tanh => d_out[[o, l]] * (1.0 - output[[o, l]].powi(2)),
                };
                for i in 0..self.in_channels {
                    for k in 0..self.kernel {
                        let src = l as isize + k as isize - pad;
                        if src >= 0 && (src as usize) < len {
                            d_in[[i, src as usize]] += self.w(o, i, k) * dz;
                        }
                    }
                }
            }
        }
        d_in
    }
}

/// Frozen stack of filter banks applied to a `frames × bins` array, with the
/// bins as input channels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureExtractor {
    layers: Vec<FilterBank>,
}

impl FeatureExtractor {
    pub fn new(layers: Vec<FilterBank>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Argument("feature extractor needs a layer".into()));
        }
        for pair in layers.windows(2) {
            check_dim(
                "feature extractor channels",
                pair[0].out_channels,
                pair[1].in_channels,
            )?;
        }
        Ok(Self { layers })
    }

    /// One identity layer with a single 1×1 filter of weight 1.
    pub fn identity() -> Self {
        Self {
            layers: vec![
                FilterBank::new(1, 1, 1, vec![1.0], vec![0.0], Activation::Identity)
                    .expect("valid"),
            ],
        }
    }

    /// Seeded `tanh` stack with weights `N(0, 1/(in·kernel))`.
    pub fn seeded(bins: usize, widths: &[usize], kernel: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(widths.len());
        let mut in_ch = bins;
        for &out_ch in widths {
            let fan_in = (in_ch * kernel).max(1) as f64;
            let normal = Normal::new(0.0, fan_in.recip().sqrt()).expect("positive sd");
            let weights = (0..out_ch * in_ch * kernel)
                .map(|_| normal.sample(&mut rng))
                .collect();
            layers.push(FilterBank::new(
                in_ch,
                out_ch,
                kernel,
                weights,
                vec![0.0; out_ch],
                Activation::Tanh,
            )?);
            in_ch = out_ch;
        }
        Self::new(layers)
    }

    pub fn input_channels(&self) -> usize {
        self.layers[0].in_channels
    }

    /// Feature maps of every layer; index 0 is the transposed input.
    fn feature_maps(&self, frames_by_bins: &Array2<f64>) -> Result<Vec<Array2<f64>>> {
        check_dim(
            "feature extractor bins",
            self.input_channels(),
            frames_by_bins.ncols(),
        )?;
        let mut maps = Vec::with_capacity(self.layers.len() + 1);
        maps.push(frames_by_bins.t().to_owned());
        for layer in &self.layers {
            let next = layer.forward(maps.last().expect("nonempty"));
            maps.push(next);
        }
        Ok(maps)
    }

    /// Layer feature maps `F_j` for `j = 1..J`, each `C_j × frames`.
    pub fn features(&self, frames_by_bins: &Array2<f64>) -> Result<Vec<Array2<f64>>> {
        let mut maps = self.feature_maps(frames_by_bins)?;
        maps.remove(0);
        Ok(maps)
    }
}

/// `Σ_j ‖G(F_j(m̂)) - G(F_j(m))‖²_F`.
pub fn style_loss(
    extractor: &FeatureExtractor,
    m_hat: &Array2<f64>,
    m: &Array2<f64>,
) -> Result<f64> {
    Ok(style_loss_and_grad(extractor, m_hat, m)?.0)
}

/// Style loss and its gradient with respect to `m_hat`.
pub fn style_loss_and_grad(
    extractor: &FeatureExtractor,
    m_hat: &Array2<f64>,
    m: &Array2<f64>,
) -> Result<(f64, Array2<f64>)> {
    if m_hat.dim() != m.dim() {
        return Err(Error::Shape {
            context: "style_loss operands",
            expected: m.len(),
            got: m_hat.len(),
        });
    }
    let hat_maps = extractor.feature_maps(m_hat)?;
    let ref_maps = extractor.feature_maps(m)?;
    let n_layers = extractor.layers.len();
    let mut loss = 0.0;
    let mut grads: Vec<Array2<f64>> = Vec::with_capacity(n_layers);
    for j in 1..=n_layers {
        let diff = gram_matrix(&hat_maps[j])? - gram_matrix(&ref_maps[j])?;
        loss += diff.iter().map(|v| v * v).sum::<f64>();
        let (c, l) = hat_maps[j].dim();
        // ∂‖G - G'‖²/∂F = 4 (G - G') F / (C L) for symmetric G
        grads.push(diff.dot(&hat_maps[j]) * (4.0 / (c * l) as f64));
    }
    let mut upstream = Array2::zeros(hat_maps[n_layers].raw_dim());
    for j in (1..=n_layers).rev() {
        upstream += &grads[j - 1];
        upstream = extractor.layers[j - 1].backward(&hat_maps[j - 1], &hat_maps[j], &upstream);
    }
    Ok((loss, upstream.t().to_owned()))
}

/// Loss components of one objective evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    pub diffusion: f64,
    pub prior: f64,
    pub style: f64,
}

/// `L_diff + L_prior + γ_style · L_style`.
pub fn total_loss(parts: &LossParts, style_weight: f64) -> f64 {
    parts.diffusion + parts.prior + style_weight * parts.style
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub step: usize,
    pub parts: LossParts,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: MlpScoreNetwork,
    pub history: Vec<LossRecord>,
}

/// Adam with bias correction over a flat parameter vector.
#[derive(Debug, Clone)]
struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    fn new(n: usize, cfg: &TrainConfig) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            lr: cfg.learning_rate,
            beta1: cfg.adam_beta1,
            beta2: cfg.adam_beta2,
            eps: cfg.adam_epsilon,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        if self.lr == 0.0 {
            return;
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grad)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

struct Draw {
    condition: usize,
    x0: Vec<f64>,
    t: f64,
    eps: Vec<f64>,
}

fn draw_batch(
    rng: &mut ChaCha8Rng,
    conditions: &[ConditionedDistribution],
    n: usize,
    fixed_condition: Option<usize>,
    floor: f64,
    t_max: f64,
) -> Vec<Draw> {
    (0..n)
        .map(|_| {
            let condition =
                fixed_condition.unwrap_or_else(|| rng.random_range(0..conditions.len()));
            let x0 = conditions[condition].sample(rng);
            let u: f64 = rng.random();
            let t = floor + (t_max - floor) * (1.0 - u);
            let eps = (0..x0.len()).map(|_| StandardNormal.sample(rng)).collect();
            Draw {
                condition,
                x0,
                t,
                eps,
            }
        })
        .collect()
}

/// Train `network` on the condition set with Adam on the total objective.
///
/// Each step draws a diffusion batch over uniformly chosen conditions and,
/// when `style_weight > 0`, a single-condition style batch. The run is a
/// pure function of the inputs and `config.seed`.
pub fn train(
    mut network: MlpScoreNetwork,
    conditions: &[ConditionedDistribution],
    schedule: &NoiseSchedule,
    config: &TrainConfig,
    extractor: &FeatureExtractor,
) -> Result<TrainOutcome> {
    config.validate()?;
    if conditions.is_empty() {
        return Err(Error::Argument("train needs at least one condition".into()));
    }
    for c in conditions {
        check_dim("train condition dim", network.dim(), c.dim())?;
        check_dim(
            "train embedding dim",
            network.embed_dim(),
            c.condition().dim(),
        )?;
    }
    if config.style_weight > 0.0 {
        check_dim(
            "style extractor bins",
            network.dim(),
            extractor.input_channels(),
        )?;
    }
    let means: Vec<Vec<f64>> = conditions.iter().map(|c| c.mean()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = Adam::new(network.params().len(), config);
    let mut history = Vec::with_capacity(config.steps);
    let b = config.batch_size;

    for step in 1..=config.steps {
        let batch = draw_batch(&mut rng, conditions, b, None, config.time_floor, HORIZON);
        let mut targets = Vec::with_capacity(b);
        let mut weights = Vec::with_capacity(b);
        let mut xts = Vec::with_capacity(b);
        for d in &batch {
            let lam = schedule.lambda_var(d.t)?;
            xts.push(schedule.forward_sample(&d.x0, d.t, &d.eps)?);
            targets.push(schedule.standard_score_target(&d.eps, d.t)?);
            weights.push(config.weighting.weight(lam));
        }
        let inputs = network.batch_input(batch.iter().zip(&xts).map(|(d, x)| {
            (
                x.as_slice(),
                d.t,
                conditions[d.condition].condition().vector.as_slice(),
            )
        }))?;
        let (diffusion, mut grad) = network.loss_and_gradient(inputs, |out| {
            let mut d_out = Array2::zeros(out.raw_dim());
            let mut loss = 0.0;
            for (i, row) in out.axis_iter(Axis(0)).enumerate() {
                for (j, o) in row.iter().enumerate() {
                    let r = o - targets[i][j];
                    loss += weights[i] * r * r;
                    d_out[[i, j]] = 2.0 * weights[i] * r / b as f64;
                }
            }
            (loss / b as f64, d_out)
        })?;

        let prior = batch
            .iter()
            .map(|d| prior_loss(std::slice::from_ref(&d.x0), &means[d.condition]))
            .sum::<Result<f64>>()?
            / b as f64;

        let mut style = 0.0;
        if config.style_weight > 0.0 {
            let c = rng.random_range(0..conditions.len());
            let sbatch = draw_batch(
                &mut rng,
                conditions,
                b,
                Some(c),
                config.time_floor,
                config.style_time_max,
            );
            let mut xts = Vec::with_capacity(b);
            let mut coeffs = Vec::with_capacity(b);
            for d in &sbatch {
                let (a, lam) = (schedule.alpha(d.t)?, schedule.lambda_var(d.t)?);
                xts.push(schedule.forward_sample(&d.x0, d.t, &d.eps)?);
                coeffs.push((a, lam));
            }
            let e = conditions[c].condition().vector.as_slice();
            let inputs = network
                .batch_input(sbatch.iter().zip(&xts).map(|(d, x)| (x.as_slice(), d.t, e)))?;
            let dim = network.dim();
            let clean = Array2::from_shape_fn((b, dim), |(i, j)| sbatch[i].x0[j]);
            let mut style_err = None;
            let (_, sgrad) = network.loss_and_gradient(inputs, |out| {
                // one-step estimate x̂0 = (x_t + λ s) / α
                let m_hat = Array2::from_shape_fn((b, dim), |(i, j)| {
                    let (a, lam) = coeffs[i];
                    (xts[i][j] + lam * out[[i, j]]) / a
                });
                match style_loss_and_grad(extractor, &m_hat, &clean) {
                    Ok((l, g)) => {
                        style = l;
                        let d_out = Array2::from_shape_fn((b, dim), |(i, j)| {
                            let (a, lam) = coeffs[i];
                            config.style_weight * g[[i, j]] * lam / a
                        });
                        (l, d_out)
                    }
                    Err(e) => {
                        style_err = Some(e);
                        (0.0, Array2::zeros((b, dim)))
                    }
                }
            })?;
            if let Some(e) = style_err {
                return Err(e);
            }
            grad.iter_mut().zip(&sgrad).for_each(|(g, s)| *g += s);
        }

        let parts = LossParts {
            diffusion,
            prior,
            style,
        };
        let total = total_loss(&parts, config.style_weight);
        if !total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Training { step, loss: total });
        }
        history.push(LossRecord { step, parts, total });
        adam.step(network.params_mut(), &grad);
    }
    Ok(TrainOutcome { network, history })
}

/// Score-matching error of `model` against the exact oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreMatchingError {
    /// Mean `‖s_model - s_true‖²` over `(x, t)` with `x ~ p_t`.
    pub model: f64,
    /// Same statistic for the zero model, on identical draws.
    pub zero_baseline: f64,
}

impl ScoreMatchingError {
    pub fn ratio(&self) -> f64 {
        self.model / self.zero_baseline
    }
}

pub fn score_matching_error<M: ScoreModel + ?Sized>(
    model: &M,
    oracle: &AnalyticScoreModel,
    n: usize,
    time_floor: f64,
    seed: u64,
) -> Result<ScoreMatchingError> {
    if n == 0 {
        return Err(Error::Argument("score_matching_error needs n >= 1".into()));
    }
    let schedule = oracle.schedule();
    let conditions = oracle.conditions();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let batch = draw_batch(&mut rng, conditions, n, None, time_floor, HORIZON);
    let (mut err, mut base) = (0.0, 0.0);
    for d in &batch {
        let x = schedule.forward_sample(&d.x0, d.t, &d.eps)?;
        let dist = &conditions[d.condition];
        let truth = dist.score(schedule, &x, d.t)?;
        let est = model.score(&x, d.t, &dist.condition().vector)?;
        err += est
            .iter()
            .zip(&truth)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>();
        base += truth.iter().map(|v| v * v).sum::<f64>();
    }
    Ok(ScoreMatchingError {
        model: err / n as f64,
        zero_baseline: base / n as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score_models::{default_layout, ConditionEmbedding};
    use approx::assert_relative_eq;

    fn single_gaussian() -> ConditionedDistribution {
        ConditionedDistribution::gaussian(
            ConditionEmbedding::new("Happy", vec![1.0]).unwrap(),
            vec![2.0, 0.0],
            0.25,
        )
        .unwrap()
    }

    struct Zero;
    impl ScoreModel for Zero {
        fn dim(&self) -> usize {
            2
        }
        fn score(&self, x: &[f64], _t: f64, _e: &[f64]) -> Result<Vec<f64>> {
            Ok(vec![0.0; x.len()])
        }
    }

    /// Conditional score of one known clean point: reproduces the target.
    struct PointStub {
        x0: Vec<f64>,
        schedule: NoiseSchedule,
    }
    impl ScoreModel for PointStub {
        fn dim(&self) -> usize {
            self.x0.len()
        }
        fn score(&self, x: &[f64], t: f64, _e: &[f64]) -> Result<Vec<f64>> {
            let a = self.schedule.alpha(t)?;
            let lam = self.schedule.lambda_var(t)?;
            Ok(x.iter()
                .zip(&self.x0)
                .map(|(xi, mi)| -(xi - a * mi) / lam)
                .collect())
        }
    }

    #[test]
    fn stub_matching_target_has_zero_loss() {
        let s = NoiseSchedule::default();
        let x0 = vec![vec![0.7, -1.2]; 16];
        let stub = PointStub {
            x0: x0[0].clone(),
            schedule: s,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let l = diffusion_loss(
            &stub,
            &single_gaussian(),
            &s,
            &x0,
            &mut rng,
            LossWeighting::Lambda,
            1e-3,
        )
        .unwrap();
        assert!(l < 1e-18, "{l}");
    }

    #[test]
    fn oracle_beats_zero_model_on_shared_draws() {
        let s = NoiseSchedule::default();
        let dist = single_gaussian();
        let oracle = AnalyticScoreModel::new(s, vec![dist.clone()]).unwrap();
        let mut violations = 0;
        for seed in 0..12 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x0: Vec<_> = (0..256).map(|_| dist.sample(&mut rng)).collect();
            let draws: Vec<_> = (0..256)
                .map(|_| DiffusionDraw::sample(&mut rng, 2, 1e-3))
                .collect();
            let e = &dist.condition().vector;
            let lo = diffusion_loss_with_draws(&oracle, &s, e, &x0, &draws, LossWeighting::Lambda)
                .unwrap();
            let hi = diffusion_loss_with_draws(&Zero, &s, e, &x0, &draws, LossWeighting::Lambda)
                .unwrap();
            if lo >= hi {
                violations += 1;
            }
        }
        assert!(violations <= 1);
    }

    #[test]
    fn loss_is_batch_order_invariant() {
        let s = NoiseSchedule::default();
        let dist = single_gaussian();
        let oracle = AnalyticScoreModel::new(s, vec![dist.clone()]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x0: Vec<_> = (0..32).map(|_| dist.sample(&mut rng)).collect();
        let draws: Vec<_> = (0..32)
            .map(|_| DiffusionDraw::sample(&mut rng, 2, 1e-3))
            .collect();
        let e = &dist.condition().vector;
        let a =
            diffusion_loss_with_draws(&oracle, &s, e, &x0, &draws, LossWeighting::Unit).unwrap();
        let (rx, rd): (Vec<_>, Vec<_>) = x0.into_iter().zip(draws).rev().unzip();
        let b = diffusion_loss_with_draws(&oracle, &s, e, &rx, &rd, LossWeighting::Unit).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-12);
    }

    #[test]
    fn draws_respect_floor() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let d = DiffusionDraw::sample(&mut rng, 1, 1e-3);
            assert!(d.t > 1e-3 && d.t <= 1.0);
        }
    }

    #[test]
    fn prior_loss_values() {
        assert_eq!(
            prior_loss(&[vec![1.0, 2.0], vec![1.0, 2.0]], &[1.0, 2.0]).unwrap(),
            0.0
        );
        assert_eq!(prior_loss(&[vec![3.0]], &[1.0]).unwrap(), 2.0);
        let a = prior_loss(&[vec![0.3, -1.0], vec![2.0, 0.5]], &[1.0, 1.0]).unwrap();
        let b = prior_loss(&[vec![5.3, 6.0], vec![7.0, 7.5]], &[6.0, 8.0]).unwrap();
        assert_relative_eq!(a, b, epsilon = 1e-12);
        assert!(prior_loss(&[], &[1.0]).is_err());
    }

    #[test]
    fn gram_values() {
        let z = gram_matrix(&Array2::zeros((3, 4))).unwrap();
        assert!(z.iter().all(|v| *v == 0.0));
        let g = gram_matrix(&Array2::from_elem((1, 1), 2.0)).unwrap();
        assert_eq!(g[[0, 0]], 4.0);
        assert!(gram_matrix(&Array2::zeros((0, 3))).is_err());
    }

    #[test]
    fn style_loss_hand_example() {
        let id = FeatureExtractor::identity();
        let m_hat = Array2::from_elem((1, 1), 2.0);
        let m = Array2::from_elem((1, 1), 1.0);
        assert_eq!(style_loss(&id, &m_hat, &m).unwrap(), 9.0);
        assert!(matches!(
            style_loss(&id, &Array2::zeros((2, 1)), &m),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn style_gradient_matches_finite_differences() {
        let ex = FeatureExtractor::seeded(2, &[4, 3], 3, 7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m_hat = Array2::from_shape_fn((6, 2), |_| rng.random_range(-1.5..1.5));
        let m = Array2::from_shape_fn((6, 2), |_| rng.random_range(-1.5..1.5));
        let (_, g) = style_loss_and_grad(&ex, &m_hat, &m).unwrap();
        let h = 1e-6;
        for idx in ndarray::indices(m_hat.dim()) {
            let mut p = m_hat.clone();
            p[idx] += h;
            let mut q = m_hat.clone();
            q[idx] -= h;
            let fd =
                (style_loss(&ex, &p, &m).unwrap() - style_loss(&ex, &q, &m).unwrap()) / (2.0 * h);
            let gi = g[idx];
            assert!(
                (fd - gi).abs() <= 1e-6 * gi.abs().max(1e-3),
                "{idx:?}: fd {fd} vs {gi}"
            );
        }
    }

    #[test]
    fn total_loss_arithmetic() {
        assert_eq!(total_loss(&LossParts::default(), 1e-4), 0.0);
        let p = LossParts {
            diffusion: 1.0,
            prior: 0.5,
            style: 100.0,
        };
        assert_relative_eq!(total_loss(&p, 1e-4), 1.51, epsilon = 1e-12);
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let s = NoiseSchedule::default();
        let layout = default_layout();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = MlpScoreNetwork::random(2, 4, &[8], &mut rng).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            steps: 20,
            ..TrainConfig::default()
        };
        let ex = FeatureExtractor::seeded(2, &[4], 3, 1).unwrap();
        let out = train(net.clone(), &layout, &s, &cfg, &ex).unwrap();
        assert_eq!(out.network, net);
        assert_eq!(out.history.len(), 20);
    }

    #[test]
    fn training_is_reproducible() {
        let s = NoiseSchedule::default();
        let layout = default_layout();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let net = MlpScoreNetwork::random(2, 4, &[8], &mut rng).unwrap();
        let cfg = TrainConfig {
            steps: 50,
            learning_rate: 1e-3,
            ..TrainConfig::default()
        };
        let ex = FeatureExtractor::seeded(2, &[4], 3, 1).unwrap();
        let a = train(net.clone(), &layout, &s, &cfg, &ex).unwrap();
        let b = train(net, &layout, &s, &cfg, &ex).unwrap();
        assert_eq!(a.network, b.network);
        let bits = |h: &[LossRecord]| h.iter().map(|r| r.total.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.history), bits(&b.history));
    }

    #[test]
    fn divergence_reports_step() {
        let s = NoiseSchedule::default();
        let layout = default_layout();
        let mut net = MlpScoreNetwork::zeros(2, 4, &[4]).unwrap();
        net.params_mut()[0] = f64::NAN;
        let cfg = TrainConfig {
            steps: 3,
            ..TrainConfig::default()
        };
        let err = train(
            net,
            &layout,
            &s,
            &cfg,
            &FeatureExtractor::seeded(2, &[2], 1, 0).unwrap(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Training { step: 1, .. }));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            style_weight: -1.0,
            ..TrainConfig::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            learning_rate: f64::NAN,
            ..TrainConfig::default()
        }
        .validate()
        .is_err());
    }
}
