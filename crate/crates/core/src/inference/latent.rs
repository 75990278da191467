//! Exact Gaussian conditional of the latent vector and the marginal
//! likelihood of a Gaussian-response latent model.

use rand::Rng;

use crate::error::{Error, Result};
use crate::gmrf::{factorize, CholeskyFactor, FactorCache, KrigingCorrection, SelectedInverse};
use crate::sparse::{CsrMatrix, SymCsc};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Prior quantities entering the marginal likelihood.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorTerms {
    /// `log det Q_prior`.
    pub log_det: f64,
    /// `log N(0; 0, B Q_prior⁻¹ Bᵀ)`, zero without constraints.
    pub constraint_log_density: f64,
}

impl PriorTerms {
    /// Generic evaluation by factorizing the whole prior precision.
    pub fn from_precision(q: &SymCsc, constraint: Option<&CsrMatrix>) -> Result<Self> {
        let f = factorize(q)?;
        let constraint_log_density = match constraint {
            Some(b) if b.nrows() > 0 => {
                let zero = vec![0.0; q.dim()];
                KrigingCorrection::new(&f, b)?.log_density(&zero, &vec![0.0; b.nrows()])
            }
            _ => 0.0,
        };
        Ok(Self { log_det: f.log_det(), constraint_log_density })
    }
}

/// The Gaussian system `w ~ N(0, Q_prior⁻¹)`, `y = A w + ε`, `ε ~ N(0, σ² I)`,
/// optionally with `B w = 0`.
#[derive(Debug, Clone, Copy)]
pub struct GaussianSystem<'a> {
    pub prior: &'a SymCsc,
    pub prior_terms: PriorTerms,
    /// `Q_prior + Aᵀ A / σ²`.
    pub posterior: &'a SymCsc,
    pub design: &'a CsrMatrix,
    /// Response minus the known offset.
    pub response: &'a [f64],
    pub noise_variance: f64,
    pub constraint: Option<&'a CsrMatrix>,
}

/// `W | v, θ`: mean and precision factor, with the constraint correction when registered.
#[derive(Debug, Clone)]
pub struct LatentConditional {
    mean: Vec<f64>,
    factor: CholeskyFactor,
    kriging: Option<KrigingCorrection>,
}

impl LatentConditional {
    /// Conditional mean (constraint applied).
    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn factor(&self) -> &CholeskyFactor {
        &self.factor
    }

    pub fn kriging(&self) -> Option<&KrigingCorrection> {
        self.kriging.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// One draw from the conditional.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z = self.factor.sample(rng);
        let w: Vec<f64> = self.mean.iter().zip(&z).map(|(m, z)| m + z).collect();
        match &self.kriging {
            Some(k) => k.apply(&w, &vec![0.0; k.constraint().nrows()]),
            None => w,
        }
    }

    /// Variance of `aᵀ W` for a sparse `a` whose pairwise entries lie on the
    /// factor pattern (true for every row of the design).
    pub fn linear_variance(&self, selinv: &SelectedInverse, idx: &[usize], vals: &[f64]) -> Result<f64> {
        let v = selinv
            .quad_form(idx, vals)
            .ok_or_else(|| Error::invalid("linear combination outside the factor pattern"))?;
        let reduction = self.kriging.as_ref().map_or(0.0, |k| k.variance_reduction(idx, vals));
        Ok((v - reduction).max(0.0))
    }
}

/// Conditional of the latent vector and `log π(y | θ)`.
pub fn condition(sys: &GaussianSystem, cache: Option<&FactorCache>) -> Result<(LatentConditional, f64)> {
    let n = sys.prior.dim();
    if sys.posterior.dim() != n || sys.design.ncols() != n || sys.design.nrows() != sys.response.len() {
        return Err(Error::DimensionMismatch("latent system dimensions disagree".into()));
    }
    if !(sys.noise_variance > 0.0) {
        return Err(Error::invalid("noise variance must be positive"));
    }
    let factor = match cache {
        Some(c) => c.factorize(sys.posterior)?,
        None => factorize(sys.posterior)?,
    };
    let s2 = sys.noise_variance;
    let rhs: Vec<f64> = sys.design.t_mul_vec(sys.response).into_iter().map(|x| x / s2).collect();
    let mean = factor.solve(&rhs);
    let fitted = sys.design.mul_vec(&mean);
    let rss: f64 = sys.response.iter().zip(&fitted).map(|(y, f)| (y - f).powi(2)).sum();
    let rows = sys.response.len() as f64;
    let mut log_ml = 0.5 * sys.prior_terms.log_det - 0.5 * factor.log_det() - 0.5 * sys.prior.quad_form(&mean)
        - 0.5 * rows * (LN_2PI + s2.ln())
        - 0.5 * rss / s2;

    let (mean, kriging) = match sys.constraint {
        Some(b) if b.nrows() > 0 => {
            let k = KrigingCorrection::new(&factor, b)?;
            let zero = vec![0.0; b.nrows()];
            log_ml += k.log_density(&mean, &zero) - sys.prior_terms.constraint_log_density;
            (k.apply(&mean, &zero), Some(k))
        }
        _ => (mean, None),
    };
    if !log_ml.is_finite() {
        return Err(Error::Degenerate("marginal likelihood is not finite".into()));
    }
    Ok((LatentConditional { mean, factor, kriging }, log_ml))
}
