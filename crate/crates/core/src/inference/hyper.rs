//! Hyperparameters, their unconstrained parameterization, and their priors.

use serde::{Deserialize, Serialize};

use super::priors::{lognormal_logdensity, pc_prior_logdensity, PcKind, TailProb};
use crate::error::{Error, Result};
use crate::stats::normal_ln_pdf;

/// Hyperparameters on their natural scale. Entries not used by a model keep
/// neutral defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// Observation noise standard deviation σ (the noise variance is σ²).
    pub noise_sd: f64,
    pub residual_sd: f64,
    pub residual_range: f64,
    /// Lag-one correlation of the residual process in time.
    pub time_rho: f64,
    pub beta: f64,
    /// Distance scale λ of the parametric α.
    pub alpha_scale: f64,
    /// Exponent κ of the parametric α, in `[0, 2]`.
    pub alpha_shape: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            noise_sd: 0.1,
            residual_sd: 1.0,
            residual_range: 1.0,
            time_rho: 0.0,
            beta: 0.0,
            alpha_scale: 1.0,
            alpha_shape: 1.0,
        }
    }
}

impl HyperParams {
    pub fn noise_variance(&self) -> f64 {
        self.noise_sd * self.noise_sd
    }
}

/// One free hyperparameter and its transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HyperKind {
    NoiseSd,
    ResidualSd,
    ResidualRange,
    TimeRho,
    /// `β > 0` through a log transform.
    Beta,
    /// `β ∈ (0, 1)` through a logit transform.
    BetaBounded,
    AlphaScale,
    AlphaShape,
}

fn sigmoid(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

impl HyperKind {
    pub fn name(self) -> &'static str {
        match self {
            HyperKind::NoiseSd => "noise_sd",
            HyperKind::ResidualSd => "residual_sd",
            HyperKind::ResidualRange => "residual_range",
            HyperKind::TimeRho => "time_rho",
            HyperKind::Beta | HyperKind::BetaBounded => "beta",
            HyperKind::AlphaScale => "alpha_scale",
            HyperKind::AlphaShape => "alpha_shape",
        }
    }

    /// Natural-scale value from the unconstrained coordinate.
    pub fn to_natural(self, u: f64) -> f64 {
        match self {
            HyperKind::NoiseSd | HyperKind::ResidualSd | HyperKind::ResidualRange | HyperKind::Beta | HyperKind::AlphaScale => {
                u.exp()
            }
            HyperKind::TimeRho => u.tanh(),
            HyperKind::BetaBounded => sigmoid(u),
            HyperKind::AlphaShape => 2.0 * sigmoid(u),
        }
    }

    pub fn to_internal(self, x: f64) -> f64 {
        match self {
            HyperKind::NoiseSd | HyperKind::ResidualSd | HyperKind::ResidualRange | HyperKind::Beta | HyperKind::AlphaScale => {
                x.ln()
            }
            HyperKind::TimeRho => x.atanh(),
            HyperKind::BetaBounded => logit(x),
            HyperKind::AlphaShape => logit(x / 2.0),
        }
    }

    /// `log |d natural / d u|`.
    fn log_jacobian(self, u: f64) -> f64 {
        match self {
            HyperKind::NoiseSd | HyperKind::ResidualSd | HyperKind::ResidualRange | HyperKind::Beta | HyperKind::AlphaScale => u,
            HyperKind::TimeRho => (1.0 - u.tanh().powi(2)).ln(),
            HyperKind::BetaBounded => {
                let s = sigmoid(u);
                (s * (1.0 - s)).ln()
            }
            HyperKind::AlphaShape => {
                let s = sigmoid(u);
                (2.0 * s * (1.0 - s)).ln()
            }
        }
    }

    fn get(self, h: &HyperParams) -> f64 {
        match self {
            HyperKind::NoiseSd => h.noise_sd,
            HyperKind::ResidualSd => h.residual_sd,
            HyperKind::ResidualRange => h.residual_range,
            HyperKind::TimeRho => h.time_rho,
            HyperKind::Beta | HyperKind::BetaBounded => h.beta,
            HyperKind::AlphaScale => h.alpha_scale,
            HyperKind::AlphaShape => h.alpha_shape,
        }
    }

    fn set(self, h: &mut HyperParams, x: f64) {
        match self {
            HyperKind::NoiseSd => h.noise_sd = x,
            HyperKind::ResidualSd => h.residual_sd = x,
            HyperKind::ResidualRange => h.residual_range = x,
            HyperKind::TimeRho => h.time_rho = x,
            HyperKind::Beta | HyperKind::BetaBounded => h.beta = x,
            HyperKind::AlphaScale => h.alpha_scale = x,
            HyperKind::AlphaShape => h.alpha_shape = x,
        }
    }
}

/// Prior settings for every hyperparameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Priors {
    pub noise_sd: TailProb,
    pub residual_sd: TailProb,
    pub residual_range: TailProb,
    pub time_rho: TailProb,
    /// Mean and sd of `log β`.
    pub beta_log_mean: f64,
    pub beta_log_sd: f64,
    /// Mean and sd of `log λ` for the parametric α.
    pub alpha_scale_log_mean: f64,
    pub alpha_scale_log_sd: f64,
    /// Sd of `logit(κ / 2)` (mean 0) for the parametric α.
    pub alpha_shape_logit_sd: f64,
}

impl Default for Priors {
    fn default() -> Self {
        Self {
            noise_sd: TailProb { threshold: 0.1, prob: 0.5 },
            residual_sd: TailProb { threshold: 1.0, prob: 0.5 },
            residual_range: TailProb { threshold: 100.0, prob: 0.5 },
            time_rho: TailProb { threshold: 0.5, prob: 0.5 },
            beta_log_mean: -(2f64.ln()),
            beta_log_sd: 1.0,
            alpha_scale_log_mean: 100f64.ln(),
            alpha_scale_log_sd: 1.5,
            alpha_shape_logit_sd: 1.5,
        }
    }
}

impl Priors {
    pub fn validate(&self) -> Result<()> {
        for t in [self.noise_sd, self.residual_sd, self.residual_range, self.time_rho] {
            t.validate()?;
        }
        if self.time_rho.threshold >= 1.0 {
            return Err(Error::invalid("time correlation prior threshold must lie in (0, 1)"));
        }
        if !(self.beta_log_sd > 0.0 && self.alpha_scale_log_sd > 0.0 && self.alpha_shape_logit_sd > 0.0) {
            return Err(Error::invalid("prior standard deviations must be positive"));
        }
        Ok(())
    }

    /// Natural-scale log prior density of one hyperparameter.
    fn log_density(&self, kind: HyperKind, x: f64) -> Result<f64> {
        Ok(match kind {
            HyperKind::NoiseSd => pc_prior_logdensity(PcKind::NoiseSd, x, self.noise_sd)?,
            HyperKind::ResidualSd => pc_prior_logdensity(PcKind::Sd, x, self.residual_sd)?,
            HyperKind::ResidualRange => pc_prior_logdensity(PcKind::Range, x, self.residual_range)?,
            HyperKind::TimeRho => pc_prior_logdensity(PcKind::Ar1, x, self.time_rho)?,
            HyperKind::Beta | HyperKind::BetaBounded => lognormal_logdensity(x, self.beta_log_mean, self.beta_log_sd),
            HyperKind::AlphaScale => lognormal_logdensity(x, self.alpha_scale_log_mean, self.alpha_scale_log_sd),
            HyperKind::AlphaShape => {
                let s = x / 2.0;
                normal_ln_pdf(logit(s), 0.0, self.alpha_shape_logit_sd) - (2.0 * s * (1.0 - s)).ln()
            }
        })
    }
}

/// Ordered list of the free hyperparameters of a model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HyperLayout {
    kinds: Vec<HyperKind>,
}

impl HyperLayout {
    pub fn new(kinds: Vec<HyperKind>) -> Self {
        Self { kinds }
    }

    pub fn kinds(&self) -> &[HyperKind] {
        &self.kinds
    }

    pub fn dim(&self) -> usize {
        self.kinds.len()
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.kinds.iter().map(|k| k.name()).collect()
    }

    /// Hyperparameters from unconstrained coordinates; unused entries come from `base`.
    pub fn to_params(&self, u: &[f64], base: &HyperParams) -> HyperParams {
        let mut h = *base;
        for (k, &x) in self.kinds.iter().zip(u) {
            k.set(&mut h, k.to_natural(x));
        }
        h
    }

    pub fn to_internal(&self, h: &HyperParams) -> Vec<f64> {
        self.kinds.iter().map(|k| k.to_internal(k.get(h))).collect()
    }

    /// Natural-scale value of each free hyperparameter.
    pub fn values(&self, h: &HyperParams) -> Vec<f64> {
        self.kinds.iter().map(|k| k.get(h)).collect()
    }

    /// Log prior density of the unconstrained coordinates (Jacobian included).
    pub fn log_prior(&self, u: &[f64], priors: &Priors) -> Result<f64> {
        let mut s = 0.0;
        for (k, &x) in self.kinds.iter().zip(u) {
            s += priors.log_density(*k, k.to_natural(x))? + k.log_jacobian(x);
        }
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transforms_round_trip() {
        let h = HyperParams {
            noise_sd: 0.2,
            residual_sd: 1.5,
            residual_range: 40.0,
            time_rho: -0.3,
            beta: 0.4,
            alpha_scale: 80.0,
            alpha_shape: 1.2,
        };
        let all = vec![
            HyperKind::NoiseSd,
            HyperKind::ResidualSd,
            HyperKind::ResidualRange,
            HyperKind::TimeRho,
            HyperKind::BetaBounded,
            HyperKind::AlphaScale,
            HyperKind::AlphaShape,
        ];
        let layout = HyperLayout::new(all);
        let back = layout.to_params(&layout.to_internal(&h), &HyperParams::default());
        for (a, b) in layout.values(&back).iter().zip(layout.values(&h)) {
            assert!((a - b).abs() < 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn internal_prior_is_normalized() {
        let priors = Priors::default();
        for kind in [HyperKind::NoiseSd, HyperKind::ResidualRange, HyperKind::TimeRho, HyperKind::Beta, HyperKind::AlphaShape] {
            let layout = HyperLayout::new(vec![kind]);
            let (a, b, n) = (-30.0, 30.0, 300_000);
            let h = (b - a) / n as f64;
            let total: f64 = (0..n)
                .map(|k| layout.log_prior(&[a + (k as f64 + 0.5) * h], &priors).unwrap().exp())
                .sum::<f64>()
                * h;
            assert!((total - 1.0).abs() < 2e-3, "{kind:?}: {total}");
        }
    }
}
