//! Forward diffusion process with a linear noise schedule.
//!
//! The forward SDE `dX = -½ β_t X dt + sqrt(β_t) dW` on `t ∈ [0, 1]` has a
//! Gaussian transition kernel `X_t | X_0 ~ N(α(t) X_0, λ(t) I)` with
//! `α(t) = exp(-½ ∫β)` and `λ(t) = 1 - exp(-∫β)`.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Terminal time of the continuous process.
pub const HORIZON: f64 = 1.0;

/// Linear schedule `β_t = β_0 + (β_1 - β_0) t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    beta0: f64,
    beta1: f64,
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self {
            beta0: 0.05,
            beta1: 20.0,
        }
    }
}

impl NoiseSchedule {
    pub fn new(beta0: f64, beta1: f64) -> Result<Self> {
        if !(beta0.is_finite() && beta0 > 0.0) {
            return Err(Error::Validation {
                item: "NoiseSchedule",
                reason: format!("beta0 must be positive and finite, got {beta0}"),
            });
        }
        if !(beta1.is_finite() && beta1 >= beta0) {
            return Err(Error::Validation {
                item: "NoiseSchedule",
                reason: format!("beta1 must be finite and >= beta0 ({beta0}), got {beta1}"),
            });
        }
        Ok(Self { beta0, beta1 })
    }

    pub fn beta0(&self) -> f64 {
        self.beta0
    }

    pub fn beta1(&self) -> f64 {
        self.beta1
    }

    fn check_time(t: f64) -> Result<()> {
        if (0.0..=HORIZON).contains(&t) {
            Ok(())
        } else {
            Err(Error::Domain {
                what: "t",
                value: t,
                range: "[0, 1]",
            })
        }
    }

    pub fn beta_at(&self, t: f64) -> Result<f64> {
        Self::check_time(t)?;
        Ok(self.beta0 + (self.beta1 - self.beta0) * t)
    }

    /// Exact `∫₀ᵗ β_s ds`.
    pub fn beta_integral(&self, t: f64) -> Result<f64> {
        Self::check_time(t)?;
        Ok(self.beta0 * t + 0.5 * (self.beta1 - self.beta0) * t * t)
    }

    /// Mean scale of the transition kernel.
    pub fn alpha(&self, t: f64) -> Result<f64> {
        Ok((-0.5 * self.beta_integral(t)?).exp())
    }

    /// Per-coordinate variance of the transition kernel.
    pub fn lambda_var(&self, t: f64) -> Result<f64> {
        // -expm1 keeps precision for small t.
        Ok(-(-self.beta_integral(t)?).exp_m1())
    }

    /// `α(t)·x0 + sqrt(λ(t))·eps` for a standard normal `eps`.
    pub fn forward_sample(&self, x0: &[f64], t: f64, eps: &[f64]) -> Result<Vec<f64>> {
        check_dim("forward_sample eps", x0.len(), eps.len())?;
        let a = self.alpha(t)?;
        let s = self.lambda_var(t)?.sqrt();
        Ok(x0.iter().zip(eps).map(|(x, e)| a * x + s * e).collect())
    }

    /// Score target for a standard normal draw `eps`: the conditional score
    /// `-eps / sqrt(λ(t))` at `forward_sample(x0, t, eps)`.
    pub fn standard_score_target(&self, eps: &[f64], t: f64) -> Result<Vec<f64>> {
        let s = self.lambda_var(t)?.sqrt();
        let scaled: Vec<f64> = eps.iter().map(|e| s * e).collect();
        self.score_target(&scaled, t)
    }

    /// Conditional score `-eps / λ(t)` of the transition kernel, where `eps`
    /// is the displacement `x_t - α(t) x0 ~ N(0, λ(t) I)`.
    pub fn score_target(&self, eps: &[f64], t: f64) -> Result<Vec<f64>> {
        let lam = self.lambda_var(t)?;
        if lam <= 0.0 {
            return Err(Error::Singularity { t });
        }
        Ok(eps.iter().map(|e| -e / lam).collect())
    }
}
