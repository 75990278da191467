//! Penalized-complexity and auxiliary prior densities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::normal_ln_pdf;

/// Tail statement `Pr(parameter > threshold) = prob` calibrating a PC prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailProb {
    pub threshold: f64,
    pub prob: f64,
}

impl TailProb {
    pub fn new(threshold: f64, prob: f64) -> Result<Self> {
        let t = Self { threshold, prob };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.prob > 0.0 && self.prob < 1.0) {
            return Err(Error::invalid(format!(
                "prior tail statement needs threshold > 0 and probability in (0, 1), got ({}, {})",
                self.threshold, self.prob
            )));
        }
        Ok(())
    }
}

/// Which penalized-complexity construction to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PcKind {
    /// Standard deviation of a Gaussian component (exponential on the sd).
    Sd,
    /// Noise standard deviation; same construction as [`PcKind::Sd`].
    NoiseSd,
    /// Spatial range (exponential on the inverse range).
    Range,
    /// AR(1) coefficient with base model `ρ = 0`.
    Ar1,
}

/// Rate of the exponential on the standard deviation with `Pr(sd > r) = p`.
pub fn sd_rate(t: TailProb) -> f64 {
    -t.prob.ln() / t.threshold
}

/// Rate of the exponential on `1/range` with `Pr(range > r) = p`.
pub fn range_rate(t: TailProb) -> f64 {
    -t.threshold * (1.0 - t.prob).ln()
}

fn ar1_distance(rho: f64) -> f64 {
    (-(1.0 - rho * rho).ln()).sqrt()
}

/// Rate of the AR(1) prior with `Pr(|ρ| > r) = p`.
pub fn ar1_rate(t: TailProb) -> f64 {
    -t.prob.ln() / ar1_distance(t.threshold)
}

/// Log-density of a PC prior at `value`, on the natural scale.
pub fn pc_prior_logdensity(kind: PcKind, value: f64, t: TailProb) -> Result<f64> {
    t.validate()?;
    if kind == PcKind::Ar1 && !(t.threshold < 1.0) {
        return Err(Error::invalid("AR(1) prior threshold must lie in (0, 1)"));
    }
    Ok(match kind {
        PcKind::Sd | PcKind::NoiseSd => {
            let rate = sd_rate(t);
            if value < 0.0 {
                f64::NEG_INFINITY
            } else {
                rate.ln() - rate * value
            }
        }
        PcKind::Range => {
            let rate = range_rate(t);
            if value <= 0.0 {
                f64::NEG_INFINITY
            } else {
                rate.ln() - 2.0 * value.ln() - rate / value
            }
        }
        PcKind::Ar1 => {
            if !(value.abs() < 1.0) {
                f64::NEG_INFINITY
            } else if value == 0.0 {
                // the density has a finite limit (λ/2) at the base model
                (0.5 * ar1_rate(t)).ln()
            } else {
                let rate = ar1_rate(t);
                let d = ar1_distance(value);
                (0.5 * rate).ln() - rate * d + value.abs().ln() - (1.0 - value * value).ln() - d.ln()
            }
        }
    })
}

/// Log-normal log-density, parameterized by the mean and sd of the log.
pub fn lognormal_logdensity(value: f64, log_mean: f64, log_sd: f64) -> f64 {
    if value <= 0.0 {
        return f64::NEG_INFINITY;
    }
    normal_ln_pdf(value.ln(), log_mean, log_sd) - value.ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        (0..n).map(|k| f(a + (k as f64 + 0.5) * h)).sum::<f64>() * h
    }

    #[test]
    fn sd_prior_example() {
        let t = TailProb::new(0.1, 0.5).unwrap();
        assert!((sd_rate(t) - 6.931_471_805_599_453).abs() < 1e-12);
        let d0 = pc_prior_logdensity(PcKind::Sd, 0.0, t).unwrap().exp();
        assert!((d0 - 6.931_471_805_599_453).abs() < 1e-12);
    }

    #[test]
    fn ar1_prior_is_exponential_in_distance() {
        // with ρ = √(1 − exp(−d²)), the density of d is λ exp(−λ d)
        let t = TailProb::new(0.5, 0.5).unwrap();
        let rate = ar1_rate(t);
        for d in [0.05f64, 0.3, 1.0, 2.5, 4.0] {
            let rho = (1.0 - (-d * d).exp()).sqrt();
            let jac = d * (-d * d).exp() / rho;
            let dens = 2.0 * pc_prior_logdensity(PcKind::Ar1, rho, t).unwrap().exp() * jac;
            assert!((dens - rate * (-rate * d).exp()).abs() < 1e-10 * rate, "d = {d}");
        }
        // calibration: Pr(|ρ| > 0.5) = exp(−λ d(0.5)) = 0.5
        assert!(((-rate * ar1_distance(0.5)).exp() - 0.5).abs() < 1e-12);
        let total = integrate(|r| pc_prior_logdensity(PcKind::Ar1, r, t).unwrap().exp(), -0.9, 0.9, 200_000);
        assert!((total - (1.0 - (-rate * ar1_distance(0.9)).exp())).abs() < 1e-4);
    }

    #[test]
    fn range_prior_normalized() {
        let t = TailProb::new(100.0, 0.5).unwrap();
        let dens = |r: f64| pc_prior_logdensity(PcKind::Range, r, t).unwrap().exp();
        // substitute r = 1/s to integrate over a finite interval
        let total = integrate(|s: f64| dens(1.0 / s) / (s * s), 1e-9, 1.0, 400_000);
        assert!((total - 1.0).abs() < 1e-3, "{total}");
    }

    #[test]
    fn invalid_tail_statement() {
        assert!(TailProb::new(0.0, 0.5).is_err());
        assert!(TailProb::new(1.0, 1.0).is_err());
        assert!(pc_prior_logdensity(PcKind::Ar1, 0.1, TailProb { threshold: 2.0, prob: 0.5 }).is_err());
    }

    #[test]
    fn beta_prior_median() {
        // the median of a log-normal is exp(mean of the log)
        let m = (-(2f64).ln()).exp();
        assert!((m - 0.5).abs() < 1e-15);
        let below = integrate(|b| lognormal_logdensity(b, -(2f64).ln(), 1.0).exp(), 1e-12, 0.5, 200_000);
        assert!((below - 0.5).abs() < 1e-4);
    }
}
