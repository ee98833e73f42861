//! Bayes-posterior probe over the known condition distributions, and the
//! experiment metrics built on it: probability-vs-weight curves, intensity
//! confusion matrices and moment checks.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::sampler::{intensity_mix, sample_mixed_streams, MixSpec, PhaseBounds, SamplerConfig};
use crate::schedule::NoiseSchedule;
use crate::score_models::{ConditionEmbedding, ConditionedDistribution, ScoreModel};

/// Classifier `p(c | x) ∝ prior_c · p_c(x)` using clean (`t = 0`) densities.
#[derive(Debug, Clone)]
pub struct Probe {
    conditions: Vec<ConditionedDistribution>,
    log_priors: Vec<f64>,
    schedule: NoiseSchedule,
}

impl Probe {
    /// Equal priors.
    pub fn new(conditions: Vec<ConditionedDistribution>) -> Result<Self> {
        let n = conditions.len();
        Self::with_priors(conditions, vec![1.0 / n as f64; n])
    }

    pub fn with_priors(conditions: Vec<ConditionedDistribution>, priors: Vec<f64>) -> Result<Self> {
        if conditions.is_empty() {
            return Err(Error::Argument("probe needs at least one condition".into()));
        }
        check_dim("probe priors", conditions.len(), priors.len())?;
        let total: f64 = priors.iter().sum();
        if priors.iter().any(|p| !(p.is_finite() && *p > 0.0)) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::Validation {
                item: "Probe",
                reason: format!("priors must be positive and sum to 1, got {priors:?}"),
            });
        }
        Ok(Self {
            conditions,
            log_priors: priors.iter().map(|p| p.ln()).collect(),
            // only t = 0 densities are evaluated, so the schedule is irrelevant
            schedule: NoiseSchedule::default(),
        })
    }

    pub fn labels(&self) -> Vec<String> {
        self.conditions
            .iter()
            .map(|c| c.label().to_string())
            .collect()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.conditions.iter().position(|c| c.label() == label)
    }

    pub fn posterior(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut logs = Vec::with_capacity(self.conditions.len());
        for (c, lp) in self.conditions.iter().zip(&self.log_priors) {
            logs.push(lp + c.log_density(&self.schedule, x, 0.0)?);
        }
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut p: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= z);
        Ok(p)
    }

    /// Mean posterior over a batch, with standard errors.
    pub fn evaluate(
        &self,
        samples: &[Vec<f64>],
        descriptor: impl Into<String>,
    ) -> Result<ProbeResult> {
        if samples.is_empty() {
            return Err(Error::Argument("probe evaluation needs samples".into()));
        }
        let k = self.conditions.len();
        let n = samples.len() as f64;
        let mut sum = vec![0.0; k];
        let mut sq = vec![0.0; k];
        for x in samples {
            for (i, p) in self.posterior(x)?.into_iter().enumerate() {
                sum[i] += p;
                sq[i] += p * p;
            }
        }
        let probabilities: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let std_errors = probabilities
            .iter()
            .zip(&sq)
            .map(|(m, s)| {
                if samples.len() < 2 {
                    0.0
                } else {
                    ((s / n - m * m).max(0.0) * n / (n - 1.0) / n).sqrt()
                }
            })
            .collect();
        Ok(ProbeResult {
            labels: self.labels(),
            probabilities,
            std_errors,
            count: samples.len(),
            descriptor: descriptor.into(),
        })
    }
}

/// Stand-alone posterior with explicit priors.
pub fn posterior(
    conditions: &[ConditionedDistribution],
    priors: &[f64],
    x: &[f64],
) -> Result<Vec<f64>> {
    Probe::with_priors(conditions.to_vec(), priors.to_vec())?.posterior(x)
}

/// Batch-mean probe probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeResult {
    pub labels: Vec<String>,
    pub probabilities: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub count: usize,
    pub descriptor: String,
}

impl ProbeResult {
    pub fn probability(&self, label: &str) -> Option<f64> {
        self.labels
            .iter()
            .position(|l| l == label)
            .map(|i| self.probabilities[i])
    }

    pub fn std_error(&self, label: &str) -> Option<f64> {
        self.labels
            .iter()
            .position(|l| l == label)
            .map(|i| self.std_errors[i])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub gamma: f64,
    pub result: ProbeResult,
}

/// Mean probe probabilities as a function of the mixed-in weight.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityCurve {
    pub labels: Vec<String>,
    pub rows: Vec<CurveRow>,
}

impl ProbabilityCurve {
    pub fn series(&self, label: &str) -> Option<Vec<f64>> {
        self.rows
            .iter()
            .map(|r| r.result.probability(label))
            .collect()
    }

    /// CSV with columns `gamma,<label>...`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["gamma".to_string()];
        header.extend(self.labels.iter().cloned());
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![format_float(row.gamma)];
            rec.extend(row.result.probabilities.iter().map(|p| format_float(*p)));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Round-trip float formatting used in every CSV artifact.
pub fn format_float(v: f64) -> String {
    format!("{v:?}")
}

/// Sweep the mixed-in weight: for each `γ` in `gammas`, sample `batch`
/// mixed chains and record the mean probe posterior. Every row reuses the
/// same RNG streams, so rows differ only through `γ`.
#[allow(clippy::too_many_arguments)]
pub fn probability_curve<M: ScoreModel + ?Sized>(
    model: &M,
    schedule: &NoiseSchedule,
    probe: &Probe,
    base: &ConditionEmbedding,
    mixin: &ConditionEmbedding,
    gammas: &[f64],
    batch: usize,
    bounds: PhaseBounds,
    cfg: &SamplerConfig,
) -> Result<ProbabilityCurve> {
    if gammas.is_empty() || batch == 0 {
        return Err(Error::Argument(
            "probability_curve needs a nonempty grid and batch".into(),
        ));
    }
    let mut rows = Vec::with_capacity(gammas.len());
    for &gamma in gammas {
        let mix = MixSpec::dual(
            base.clone(),
            mixin.clone(),
            gamma,
            bounds.k_max,
            bounds.k_min,
            true,
        )?;
        let samples = sample_mixed_streams(model, schedule, &mix, cfg, 0..batch as u64)?;
        rows.push(CurveRow {
            gamma,
            result: probe.evaluate(&samples, mix.descriptor())?,
        });
    }
    Ok(ProbabilityCurve {
        labels: probe.labels(),
        rows,
    })
}

/// A named range of mixed-in weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityBucket {
    pub name: String,
    pub low: f64,
    pub high: f64,
}

impl IntensityBucket {
    pub fn new(name: impl Into<String>, low: f64, high: f64) -> Self {
        Self {
            name: name.into(),
            low,
            high,
        }
    }

    /// Weak `[0.1, 0.3]`, medium `[0.4, 0.6]`, strong `[0.7, 0.8]`.
    pub fn standard() -> Vec<Self> {
        vec![
            Self::new("weak", 0.1, 0.3),
            Self::new("medium", 0.4, 0.6),
            Self::new("strong", 0.7, 0.8),
        ]
    }

    /// Stratified weight for batch `b` of `n`: `low + (high - low)(b + ½)/n`.
    pub fn gamma_for(&self, b: usize, n: usize) -> f64 {
        self.low + (self.high - self.low) * (b as f64 + 0.5) / n as f64
    }
}

/// Rows are intended buckets, columns are assigned buckets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn row_sums(&self) -> Vec<usize> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn diagonal_fraction(&self) -> f64 {
        let total: usize = self.row_sums().iter().sum();
        let diag: usize = (0..self.counts.len()).map(|i| self.counts[i][i]).sum();
        diag as f64 / total as f64
    }

    /// CSV with columns `intended,<assigned labels>...`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["intended".to_string()];
        header.extend(self.labels.iter().cloned());
        w.write_record(&header)?;
        for (label, row) in self.labels.iter().zip(&self.counts) {
            let mut rec = vec![label.clone()];
            rec.extend(row.iter().map(|c| c.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionReport {
    pub matrix: ConfusionMatrix,
    /// Calibrated mean probe `P(target)` per bucket.
    pub centroids: Vec<f64>,
    /// Mean probe `P(target)` of the evaluation batches per bucket.
    pub bucket_means: Vec<f64>,
}

/// Settings for [`intensity_confusion`].
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionSettings {
    pub buckets: Vec<IntensityBucket>,
    pub batches_per_bucket: usize,
    pub batch_size: usize,
    pub bounds: PhaseBounds,
    pub calibration_seed: u64,
    pub evaluation_seed: u64,
}

/// Mean probe `P(target)` per batch, for every bucket.
#[allow(clippy::too_many_arguments)]
fn bucket_batch_means<M: ScoreModel + ?Sized>(
    model: &M,
    schedule: &NoiseSchedule,
    probe: &Probe,
    neutral: &ConditionEmbedding,
    target: &ConditionEmbedding,
    target_index: usize,
    settings: &ConfusionSettings,
    cfg: &SamplerConfig,
) -> Result<Vec<Vec<f64>>> {
    let per = settings.batches_per_bucket;
    let bs = settings.batch_size as u64;
    let mut out = Vec::with_capacity(settings.buckets.len());
    for (k, bucket) in settings.buckets.iter().enumerate() {
        let mut means = Vec::with_capacity(per);
        for b in 0..per {
            let mix = intensity_mix(
                neutral,
                target,
                bucket.gamma_for(b, per),
                settings.bounds,
                false,
            )?;
            let first = ((k * per + b) as u64) * bs;
            let samples = sample_mixed_streams(model, schedule, &mix, cfg, first..first + bs)?;
            means.push(probe.evaluate(&samples, mix.descriptor())?.probabilities[target_index]);
        }
        out.push(means);
    }
    Ok(out)
}

/// Intensity confusion: calibrate one centroid of mean probe `P(target)` per
/// bucket, then assign each evaluation batch to the nearest centroid.
pub fn intensity_confusion<M: ScoreModel + ?Sized>(
    model: &M,
    schedule: &NoiseSchedule,
    probe: &Probe,
    neutral: &ConditionEmbedding,
    target: &ConditionEmbedding,
    settings: &ConfusionSettings,
    cfg: &SamplerConfig,
) -> Result<ConfusionReport> {
    if settings.buckets.is_empty() || settings.batches_per_bucket == 0 || settings.batch_size == 0 {
        return Err(Error::Argument(
            "intensity_confusion needs buckets, batches and a batch size".into(),
        ));
    }
    for b in &settings.buckets {
        if !(0.0 <= b.low && b.low <= b.high && b.high <= crate::sampler::MAX_MIXIN_WEIGHT) {
            return Err(Error::Argument(format!(
                "bucket '{}' range [{}, {}] must lie within [0, 0.8]",
                b.name, b.low, b.high
            )));
        }
    }
    let target_index = probe
        .index_of(&target.label)
        .ok_or_else(|| Error::Argument(format!("probe has no condition '{}'", target.label)))?;
    let run = |seed: u64| {
        bucket_batch_means(
            model,
            schedule,
            probe,
            neutral,
            target,
            target_index,
            settings,
            &cfg.with_seed(seed),
        )
    };
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let calibration = run(settings.calibration_seed)?;
    let evaluation = if settings.evaluation_seed == settings.calibration_seed {
        calibration.clone()
    } else {
        run(settings.evaluation_seed)?
    };
    let centroids: Vec<f64> = calibration.iter().map(|m| mean(m)).collect();
    let n = settings.buckets.len();
    let mut counts = vec![vec![0; n]; n];
    for (k, batches) in evaluation.iter().enumerate() {
        for &m in batches {
            let assigned = centroids
                .iter()
                .enumerate()
                .min_by(|a, b| (a.1 - m).abs().total_cmp(&(b.1 - m).abs()))
                .map(|(i, _)| i)
                .expect("nonempty");
            counts[k][assigned] += 1;
        }
    }
    Ok(ConfusionReport {
        matrix: ConfusionMatrix {
            labels: settings.buckets.iter().map(|b| b.name.clone()).collect(),
            counts,
        },
        centroids,
        bucket_means: evaluation.iter().map(|m| mean(m)).collect(),
    })
}

/// Sample statistics against a reference distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentReport {
    /// `|sample mean - reference mean|` per coordinate.
    pub mean_error: Vec<f64>,
    /// Frobenius norm of sample covariance minus reference covariance.
    pub covariance_error: f64,
    /// Largest entrywise covariance deviation.
    pub covariance_max_abs_error: f64,
    /// Mean log-likelihood of the samples under the reference.
    pub mean_log_likelihood: f64,
}

/// Compare samples with `reference` (population covariance, `1/n`).
pub fn moment_check(
    samples: &[Vec<f64>],
    reference: &ConditionedDistribution,
) -> Result<MomentReport> {
    if samples.is_empty() {
        return Err(Error::Argument("moment_check needs samples".into()));
    }
    let d = reference.dim();
    let n = samples.len() as f64;
    let mut mean = vec![0.0; d];
    for x in samples {
        check_dim("moment_check sample", d, x.len())?;
        for (m, v) in mean.iter_mut().zip(x) {
            *m += v / n;
        }
    }
    let mut cov = vec![0.0; d * d];
    for x in samples {
        for i in 0..d {
            for j in 0..d {
                cov[i * d + j] += (x[i] - mean[i]) * (x[j] - mean[j]) / n;
            }
        }
    }
    let ref_mean = reference.mean();
    let ref_cov = reference.covariance();
    let diffs: Vec<f64> = cov.iter().zip(&ref_cov).map(|(a, b)| a - b).collect();
    let schedule = NoiseSchedule::default();
    let mut ll = 0.0;
    for x in samples {
        ll += reference.log_density(&schedule, x, 0.0)? / n;
    }
    Ok(MomentReport {
        mean_error: mean
            .iter()
            .zip(&ref_mean)
            .map(|(a, b)| (a - b).abs())
            .collect(),
        covariance_error: diffs.iter().map(|v| v * v).sum::<f64>().sqrt(),
        covariance_max_abs_error: diffs.iter().fold(0.0, |m, v| m.max(v.abs())),
        mean_log_likelihood: ll,
    })
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    check_dim("spearman", xs.len(), ys.len())?;
    if xs.len() < 2 {
        return Err(Error::Argument("spearman needs at least two points".into()));
    }
    let rank = |v: &[f64]| -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    };
    let (rx, ry) = (rank(xs), rank(ys));
    let n = xs.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    Ok(cov / (vx * vy).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score_models::{default_layout, GaussianComponent};
    use approx::assert_relative_eq;
    use rand::SeedableRng;

    fn gauss(label: &str, mean: Vec<f64>, var: f64) -> ConditionedDistribution {
        ConditionedDistribution::gaussian(
            ConditionEmbedding::new(label, vec![1.0]).unwrap(),
            mean,
            var,
        )
        .unwrap()
    }

    #[test]
    fn symmetric_pair_gives_half() {
        let p = posterior(
            &[
                gauss("a", vec![1.0, 1.0], 0.3),
                gauss("b", vec![-1.0, -1.0], 0.3),
            ],
            &[0.5, 0.5],
            &[0.0, 0.0],
        )
        .unwrap();
        assert_relative_eq!(p[0], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn logistic_closed_form() {
        let p = posterior(
            &[gauss("l", vec![-1.0], 1.0), gauss("r", vec![1.0], 1.0)],
            &[0.5, 0.5],
            &[0.5],
        )
        .unwrap();
        let expected = 1.0 / (1.0 + (-1.0f64).exp());
        assert_relative_eq!(p[1], expected, epsilon = 1e-14);
        assert_relative_eq!(p[1], 0.7311, epsilon = 1e-4);
    }

    #[test]
    fn mode_dominates_and_sums_to_one() {
        let layout = default_layout();
        let probe = Probe::new(layout.clone()).unwrap();
        for (k, c) in layout.iter().enumerate() {
            let p = probe.posterior(&c.mean()).unwrap();
            let argmax = p
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0;
            assert_eq!(argmax, k);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        // far away points stay normalised
        let p = probe.posterior(&[1e3, -1e3]).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(p.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn rejects_bad_priors() {
        assert!(Probe::with_priors(default_layout(), vec![0.5, 0.5, 0.0, 0.0]).is_err());
        assert!(Probe::with_priors(default_layout(), vec![0.5, 0.5]).is_err());
    }

    #[test]
    fn moment_check_on_reference_draws() {
        let r = ConditionedDistribution::new(
            ConditionEmbedding::new("m", vec![1.0]).unwrap(),
            vec![
                GaussianComponent {
                    weight: 0.5,
                    mean: vec![1.0, 0.0],
                    variance: 0.3,
                },
                GaussianComponent {
                    weight: 0.5,
                    mean: vec![-1.0, 0.5],
                    variance: 0.2,
                },
            ],
        )
        .unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        let samples: Vec<_> = (0..100_000).map(|_| r.sample(&mut rng)).collect();
        let rep = moment_check(&samples, &r).unwrap();
        assert!(rep.mean_error.iter().all(|e| *e < 0.02), "{rep:?}");
        assert!(rep.covariance_max_abs_error < 0.02);
        assert!(rep.mean_log_likelihood.is_finite());
    }

    #[test]
    fn moment_check_degenerate_samples() {
        let r = gauss("g", vec![2.0, -1.0], 0.25);
        let samples = vec![r.mean(); 10];
        let rep = moment_check(&samples, &r).unwrap();
        let ref_norm = r.covariance().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert_relative_eq!(rep.covariance_error, ref_norm, epsilon = 1e-15);
        assert!(rep.mean_error.iter().all(|e| *e < 1e-12));
        assert!(moment_check(&[], &r).is_err());
    }

    #[test]
    fn spearman_values() {
        assert_relative_eq!(spearman(&[1.0, 2.0, 3.0], &[0.1, 0.5, 0.9]).unwrap(), 1.0);
        assert_relative_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
        assert!(spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 2.0, 2.0, 4.0]).unwrap() < 1.0);
    }

    #[test]
    fn confusion_rejects_empty_buckets() {
        let layout = default_layout();
        let probe = Probe::new(layout.clone()).unwrap();
        let model =
            crate::AnalyticScoreModel::new(NoiseSchedule::default(), layout.clone()).unwrap();
        let settings = ConfusionSettings {
            buckets: vec![],
            batches_per_bucket: 2,
            batch_size: 4,
            bounds: PhaseBounds::default(),
            calibration_seed: 0,
            evaluation_seed: 1,
        };
        let n = layout[0].condition();
        let t = layout[3].condition();
        let cfg = SamplerConfig::default();
        let s = NoiseSchedule::default();
        assert!(matches!(
            intensity_confusion(&model, &s, &probe, n, t, &settings, &cfg),
            Err(Error::Argument(_))
        ));
        let settings = ConfusionSettings {
            buckets: IntensityBucket::standard(),
            batches_per_bucket: 0,
            ..settings
        };
        assert!(intensity_confusion(&model, &s, &probe, n, t, &settings, &cfg).is_err());
    }

    #[test]
    fn bucket_gammas_are_stratified() {
        let b = IntensityBucket::new("weak", 0.1, 0.3);
        let g: Vec<f64> = (0..4).map(|i| b.gamma_for(i, 4)).collect();
        assert!(g.iter().all(|v| (0.1..=0.3).contains(v)));
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }
}
