use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{one_hot, ConditionEmbedding, ScoreModel};
use crate::error::{check_dim, Error, Result};
use crate::schedule::NoiseSchedule;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// One isotropic Gaussian component `w · N(mean, variance · I)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub variance: f64,
}

/// Data distribution of one condition: an isotropic Gaussian mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionedDistribution {
    condition: ConditionEmbedding,
    components: Vec<GaussianComponent>,
}

impl ConditionedDistribution {
    pub fn new(condition: ConditionEmbedding, components: Vec<GaussianComponent>) -> Result<Self> {
        let invalid = |reason: String| Error::Validation {
            item: "ConditionedDistribution",
            reason: format!("'{}': {reason}", condition.label),
        };
        let first = components
            .first()
            .ok_or_else(|| invalid("at least one component required".into()))?;
        let d = first.mean.len();
        if d == 0 {
            return Err(invalid("component means must be nonempty".into()));
        }
        let mut total = 0.0;
        for (k, c) in components.iter().enumerate() {
            if !(c.weight.is_finite() && c.weight > 0.0) {
                return Err(invalid(format!(
                    "component {k} weight {} not positive",
                    c.weight
                )));
            }
            if !(c.variance.is_finite() && c.variance > 0.0) {
                return Err(invalid(format!(
                    "component {k} variance {} not positive",
                    c.variance
                )));
            }
            if c.mean.len() != d || c.mean.iter().any(|m| !m.is_finite()) {
                return Err(invalid(format!(
                    "component {k} mean must be finite with dim {d}"
                )));
            }
            total += c.weight;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(invalid(format!("weights sum to {total}, expected 1")));
        }
        Ok(Self {
            condition,
            components,
        })
    }

    /// Single isotropic Gaussian condition.
    pub fn gaussian(condition: ConditionEmbedding, mean: Vec<f64>, variance: f64) -> Result<Self> {
        Self::new(
            condition,
            vec![GaussianComponent {
                weight: 1.0,
                mean,
                variance,
            }],
        )
    }

    pub fn condition(&self) -> &ConditionEmbedding {
        &self.condition
    }

    pub fn label(&self) -> &str {
        &self.condition.label
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    pub fn dim(&self) -> usize {
        self.components[0].mean.len()
    }

    /// Mixture mean `Σ w_k m_k`.
    pub fn mean(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for c in &self.components {
            for (o, m) in out.iter_mut().zip(&c.mean) {
                *o += c.weight * m;
            }
        }
        out
    }

    /// Mixture covariance, row-major `d × d`.
    pub fn covariance(&self) -> Vec<f64> {
        let d = self.dim();
        let mu = self.mean();
        let mut cov = vec![0.0; d * d];
        for c in &self.components {
            for i in 0..d {
                for j in 0..d {
                    let mut v = c.weight * (c.mean[i] - mu[i]) * (c.mean[j] - mu[j]);
                    if i == j {
                        v += c.weight * c.variance;
                    }
                    cov[i * d + j] += v;
                }
            }
        }
        cov
    }

    /// Draw one point from the (time-zero) mixture.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut chosen = self.components.last().expect("nonempty");
        for c in &self.components {
            acc += c.weight;
            if u < acc {
                chosen = c;
                break;
            }
        }
        let sd = chosen.variance.sqrt();
        chosen
            .mean
            .iter()
            .map(|m| {
                let z: f64 = StandardNormal.sample(rng);
                m + sd * z
            })
            .collect()
    }

    /// Push the mixture through the forward process to time `t`:
    /// each `(w, m, σ²)` becomes `(w, α m, α² σ² + λ)`.
    pub fn marginal(&self, schedule: &NoiseSchedule, t: f64) -> Result<Self> {
        let a = schedule.alpha(t)?;
        let lam = schedule.lambda_var(t)?;
        let components = self
            .components
            .iter()
            .map(|c| GaussianComponent {
                weight: c.weight,
                mean: c.mean.iter().map(|m| a * m).collect(),
                variance: a * a * c.variance + lam,
            })
            .collect();
        Ok(Self {
            condition: self.condition.clone(),
            components,
        })
    }

    /// Per-component log of `w_k N(x; α m_k, v_k I)` at time `t`, and the
    /// marginal variances `v_k`.
    fn component_terms(
        &self,
        schedule: &NoiseSchedule,
        x: &[f64],
        t: f64,
    ) -> Result<(Vec<f64>, Vec<f64>, f64)> {
        check_dim("analytic density x", self.dim(), x.len())?;
        let a = schedule.alpha(t)?;
        let lam = schedule.lambda_var(t)?;
        let d = x.len() as f64;
        let mut logs = Vec::with_capacity(self.components.len());
        let mut vars = Vec::with_capacity(self.components.len());
        for c in &self.components {
            let v = a * a * c.variance + lam;
            let sq: f64 = x
                .iter()
                .zip(&c.mean)
                .map(|(xi, mi)| (xi - a * mi).powi(2))
                .sum();
            logs.push(c.weight.ln() - 0.5 * d * (LN_2PI + v.ln()) - 0.5 * sq / v);
            vars.push(v);
        }
        Ok((logs, vars, a))
    }

    /// `log p_t(x)` of the pushed-forward mixture.
    pub fn log_density(&self, schedule: &NoiseSchedule, x: &[f64], t: f64) -> Result<f64> {
        let (logs, _, _) = self.component_terms(schedule, x, t)?;
        Ok(log_sum_exp(&logs))
    }

    /// Exact `∇_x log p_t(x)`.
    pub fn score(&self, schedule: &NoiseSchedule, x: &[f64], t: f64) -> Result<Vec<f64>> {
        let (logs, vars, a) = self.component_terms(schedule, x, t)?;
        let lse = log_sum_exp(&logs);
        let mut out = vec![0.0; x.len()];
        for ((c, l), v) in self.components.iter().zip(&logs).zip(&vars) {
            let r = (l - lse).exp();
            for ((o, xi), mi) in out.iter_mut().zip(x).zip(&c.mean) {
                *o -= r * (xi - a * mi) / v;
            }
        }
        Ok(out)
    }
}

pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Default four-condition layout in two dimensions with one-hot embeddings:
/// Neutral `N((0,0), 0.5 I)`, Happy `N((2,0), 0.25 I)`, Sad `N((-2,0), 0.25 I)`,
/// Surprise `N((0,2), 0.25 I)`.
pub fn default_layout() -> Vec<ConditionedDistribution> {
    let spec: [(&str, [f64; 2], f64); 4] = [
        ("Neutral", [0.0, 0.0], 0.5),
        ("Happy", [2.0, 0.0], 0.25),
        ("Sad", [-2.0, 0.0], 0.25),
        ("Surprise", [0.0, 2.0], 0.25),
    ];
    spec.iter()
        .enumerate()
        .map(|(i, (label, mean, var))| {
            let e = ConditionEmbedding::new(*label, one_hot(i, spec.len())).expect("finite");
            ConditionedDistribution::gaussian(e, mean.to_vec(), *var).expect("valid layout")
        })
        .collect()
}

/// Exact score oracle over a table of condition distributions.
///
/// An embedding selects the condition whose embedding vector is nearest in
/// Euclidean distance (ties go to the first entry).
#[derive(Debug, Clone)]
pub struct AnalyticScoreModel {
    schedule: NoiseSchedule,
    conditions: Vec<ConditionedDistribution>,
}

impl AnalyticScoreModel {
    pub fn new(schedule: NoiseSchedule, conditions: Vec<ConditionedDistribution>) -> Result<Self> {
        let first = conditions
            .first()
            .ok_or_else(|| Error::Argument("analytic model needs at least one condition".into()))?;
        for c in &conditions {
            check_dim("condition data dim", first.dim(), c.dim())?;
            check_dim(
                "condition embedding dim",
                first.condition.dim(),
                c.condition.dim(),
            )?;
        }
        Ok(Self {
            schedule,
            conditions,
        })
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    pub fn conditions(&self) -> &[ConditionedDistribution] {
        &self.conditions
    }

    pub fn resolve(&self, embedding: &[f64]) -> Result<&ConditionedDistribution> {
        check_dim(
            "analytic embedding",
            self.conditions[0].condition.dim(),
            embedding.len(),
        )?;
        let dist = |c: &ConditionedDistribution| -> f64 {
            c.condition
                .vector
                .iter()
                .zip(embedding)
                .map(|(a, b)| (a - b).powi(2))
                .sum()
        };
        let mut best = &self.conditions[0];
        let mut best_d = dist(best);
        for c in &self.conditions[1..] {
            let d = dist(c);
            if d < best_d {
                best = c;
                best_d = d;
            }
        }
        Ok(best)
    }
}

impl ScoreModel for AnalyticScoreModel {
    fn dim(&self) -> usize {
        self.conditions[0].dim()
    }

    fn score(&self, x: &[f64], t: f64, embedding: &[f64]) -> Result<Vec<f64>> {
        self.resolve(embedding)?.score(&self.schedule, x, t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    fn emb(label: &str) -> ConditionEmbedding {
        ConditionEmbedding::new(label, vec![1.0]).unwrap()
    }

    fn two_mode() -> ConditionedDistribution {
        ConditionedDistribution::new(
            emb("mix"),
            vec![
                GaussianComponent {
                    weight: 0.3,
                    mean: vec![1.0, -0.5],
                    variance: 0.2,
                },
                GaussianComponent {
                    weight: 0.7,
                    mean: vec![-1.5, 0.8],
                    variance: 0.6,
                },
            ],
        )
        .unwrap()
    }

    #[test]
    fn validation() {
        let bad_w = ConditionedDistribution::new(
            emb("a"),
            vec![GaussianComponent {
                weight: 0.9,
                mean: vec![0.0],
                variance: 1.0,
            }],
        );
        assert!(bad_w.is_err());
        assert!(ConditionedDistribution::gaussian(emb("a"), vec![0.0], 0.0).is_err());
        assert!(ConditionedDistribution::new(emb("a"), vec![]).is_err());
    }

    #[test]
    fn marginal_at_zero_is_identity() {
        let s = NoiseSchedule::default();
        assert_eq!(two_mode().marginal(&s, 0.0).unwrap(), two_mode());
    }

    #[test]
    fn marginal_hand_example() {
        // pick a schedule-independent check: α = 0.5 ⇒ λ = 0.75
        let s = NoiseSchedule::default();
        let target = 4.0f64.ln(); // ∫β with α² = 1/4
        let (b0, b1) = (s.beta0(), s.beta1());
        let t = (-b0 + (b0 * b0 + 2.0 * (b1 - b0) * target).sqrt()) / (b1 - b0);
        let d = ConditionedDistribution::gaussian(emb("g"), vec![1.0, 0.0], 1.0).unwrap();
        let m = d.marginal(&s, t).unwrap();
        let c = &m.components()[0];
        assert_relative_eq!(c.mean[0], 0.5, epsilon = 1e-12);
        assert_eq!(c.mean[1], 0.0);
        assert_relative_eq!(c.variance, 1.0, epsilon = 1e-12);
        let mass: f64 = two_mode()
            .marginal(&s, 0.4)
            .unwrap()
            .components()
            .iter()
            .map(|c| c.weight)
            .sum();
        assert_relative_eq!(mass, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn log_density_hand_values() {
        let s = NoiseSchedule::default();
        let std2 = ConditionedDistribution::gaussian(emb("n"), vec![0.0, 0.0], 1.0).unwrap();
        assert_relative_eq!(
            std2.log_density(&s, &[0.0, 0.0], 0.0).unwrap(),
            -LN_2PI,
            epsilon = 1e-14
        );
        let std1 = ConditionedDistribution::gaussian(emb("n"), vec![0.0], 1.0).unwrap();
        assert_relative_eq!(
            std1.log_density(&s, &[1.0], 0.0).unwrap(),
            -1.418_938_533_204_672_7,
            epsilon = 1e-12
        );
    }

    #[test]
    fn density_integrates_to_one() {
        let s = NoiseSchedule::default();
        let d = ConditionedDistribution::new(
            emb("m"),
            vec![
                GaussianComponent {
                    weight: 0.4,
                    mean: vec![-1.0],
                    variance: 0.3,
                },
                GaussianComponent {
                    weight: 0.6,
                    mean: vec![2.0],
                    variance: 0.1,
                },
            ],
        )
        .unwrap();
        for &t in &[0.0, 0.2, 0.9] {
            let (lo, hi, n) = (-12.0, 12.0, 24_000);
            let h = (hi - lo) / n as f64;
            let f = |x: f64| d.log_density(&s, &[x], t).unwrap().exp();
            let mut acc = 0.5 * (f(lo) + f(hi));
            for i in 1..n {
                acc += f(lo + i as f64 * h);
            }
            assert!((acc * h - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn score_vanishes_at_mode_and_by_symmetry() {
        let s = NoiseSchedule::default();
        let g = ConditionedDistribution::gaussian(emb("g"), vec![1.0, -2.0], 0.3).unwrap();
        let t = 0.35;
        let a = s.alpha(t).unwrap();
        let sc = g.score(&s, &[a, -2.0 * a], t).unwrap();
        assert!(sc.iter().all(|v| v.abs() < 1e-12));

        let sym = ConditionedDistribution::new(
            emb("sym"),
            vec![
                GaussianComponent {
                    weight: 0.5,
                    mean: vec![1.5, 0.5],
                    variance: 0.2,
                },
                GaussianComponent {
                    weight: 0.5,
                    mean: vec![-1.5, -0.5],
                    variance: 0.2,
                },
            ],
        )
        .unwrap();
        let sc = sym.score(&s, &[0.0, 0.0], t).unwrap();
        assert!(sc.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn score_matches_finite_differences() {
        let s = NoiseSchedule::default();
        let d = two_mode();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let h = 1e-5;
        for _ in 0..100 {
            let t = rng.random_range(0.0..=1.0);
            let x = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
            let sc = d.score(&s, &x, t).unwrap();
            for k in 0..2 {
                let mut xp = x;
                let mut xm = x;
                xp[k] += h;
                xm[k] -= h;
                let fd = (d.log_density(&s, &xp, t).unwrap() - d.log_density(&s, &xm, t).unwrap())
                    / (2.0 * h);
                let rel = (fd - sc[k]).abs() / sc[k].abs().max(1.0);
                assert!(rel < 1e-6, "t={t} x={x:?} fd={fd} analytic={}", sc[k]);
            }
        }
    }

    #[test]
    fn single_gaussian_score_is_affine() {
        let s = NoiseSchedule::default();
        let (m, var) = (vec![2.0, -1.0], 0.25);
        let g = ConditionedDistribution::gaussian(emb("g"), m.clone(), var).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            let t = rng.random_range(0.0..=1.0);
            let x = [rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)];
            let a = s.alpha(t).unwrap();
            let v = a * a * var + s.lambda_var(t).unwrap();
            let sc = g.score(&s, &x, t).unwrap();
            for k in 0..2 {
                assert!((sc[k] + (x[k] - a * m[k]) / v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn oracle_resolves_nearest_embedding() {
        let model = AnalyticScoreModel::new(NoiseSchedule::default(), default_layout()).unwrap();
        assert_eq!(
            model.resolve(&[0.0, 1.0, 0.0, 0.0]).unwrap().label(),
            "Happy"
        );
        assert_eq!(
            model.resolve(&[0.1, 0.0, 0.05, 0.9]).unwrap().label(),
            "Surprise"
        );
        assert!(model.resolve(&[1.0]).is_err());
        assert_eq!(model.dim(), 2);
    }

    #[test]
    fn mixture_moments() {
        let d = two_mode();
        let mu = d.mean();
        assert_relative_eq!(mu[0], 0.3 * 1.0 + 0.7 * -1.5, epsilon = 1e-15);
        let cov = d.covariance();
        assert_relative_eq!(cov[1], cov[2], epsilon = 1e-15);
    }
}
