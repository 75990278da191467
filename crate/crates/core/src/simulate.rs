//! Simulation of extreme episodes from a conditional extremes model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::episodes::{Episode, EpisodeSet};
use crate::error::{Error, Result};
use crate::field::Field;
use crate::gmrf::{factorize, CholeskyFactor, KrigingCorrection};
use crate::inference::fit::PosteriorFit;
use crate::inference::hyper::HyperParams;
use crate::model::{AssembledModel, Residual};
use crate::par::{map_indexed, Execution};
use crate::sparse::{CsrMatrix, SymCsc};

/// Draws the residual `Z⁰` at the sites for every time step, pinned to zero
/// at the conditioning entry.
#[derive(Debug, Clone)]
pub struct ResidualSampler {
    factor: CholeskyFactor,
    kriging: Option<KrigingCorrection>,
    sites: CsrMatrix,
    conditioning_row: CsrMatrix,
    ell: usize,
    mechanism: Residual,
}

impl ResidualSampler {
    /// `precision` is the space-time precision of `Z` with time-major blocks
    /// of size `sites.ncols()`; `conditioning_row` maps the mesh to `s₀`.
    pub fn new(precision: &SymCsc, sites: CsrMatrix, conditioning_row: CsrMatrix, ell: usize, mechanism: Residual) -> Result<Self> {
        let m = sites.ncols();
        if precision.dim() != m * ell || conditioning_row.ncols() != m || conditioning_row.nrows() != 1 {
            return Err(Error::DimensionMismatch("residual precision, site map and block length disagree".into()));
        }
        let factor = factorize(precision)?;
        let kriging = match mechanism {
            Residual::ConditionS0 => {
                let b = CsrMatrix::from_rows(m * ell, vec![conditioning_row.row_entries(0)]);
                Some(KrigingCorrection::new(&factor, &b)?)
            }
            Residual::SubtractS0 => None,
            Residual::None => return Err(Error::invalid("a residual sampler needs a residual mechanism")),
        };
        Ok(Self { factor, kriging, sites, conditioning_row, ell, mechanism })
    }

    /// Sampler matching the residual of an assembled model at `h`.
    pub fn for_model(model: &AssembledModel, h: &HyperParams) -> Result<Option<Self>> {
        let (Some(q), Some(a_s), Some(a_s0)) =
            (model.residual_precision(h)?, model.residual_sites(), model.residual_conditioning_row())
        else {
            return Ok(None);
        };
        Ok(Some(Self::new(&q, a_s.clone(), a_s0.clone(), model.block_length(), model.spec().residual)?))
    }

    pub fn n_sites(&self) -> usize {
        self.sites.nrows()
    }

    /// Values indexed `t * d + i`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let m = self.sites.ncols();
        let mut z = self.factor.sample(rng);
        if let Some(k) = &self.kriging {
            z = k.apply(&z, &[0.0]);
        }
        let shift = match self.mechanism {
            Residual::SubtractS0 => self.conditioning_row.mul_vec(&z[..m])[0],
            _ => 0.0,
        };
        let mut out = Vec::with_capacity(self.n_sites() * self.ell);
        for t in 0..self.ell {
            out.extend(self.sites.mul_vec(&z[t * m..(t + 1) * m]).into_iter().map(|v| v - shift));
        }
        out
    }
}

/// `X(s, t) | X(s₀, t₀) = x  =  x α(s, t) + γ(s, t) + x^β Z⁰(s, t) + ε`, with
/// the conditioning entry equal to `x` exactly.
#[derive(Debug, Clone)]
pub struct ConditionalSimulator {
    n_sites: usize,
    ell: usize,
    conditioning_site: usize,
    alpha: Vec<f64>,
    gamma: Vec<f64>,
    beta: f64,
    noise_sd: f64,
    residual: Option<ResidualSampler>,
}

impl ConditionalSimulator {
    /// `alpha` and `gamma` hold one value per `(t, i)`, indexed `t * d + i`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n_sites: usize,
        ell: usize,
        conditioning_site: usize,
        alpha: Vec<f64>,
        gamma: Vec<f64>,
        beta: f64,
        noise_sd: f64,
        residual: Option<ResidualSampler>,
    ) -> Result<Self> {
        let len = n_sites * ell;
        if alpha.len() != len || gamma.len() != len {
            return Err(Error::DimensionMismatch(format!("α and γ need {len} values")));
        }
        if conditioning_site >= n_sites || ell == 0 {
            return Err(Error::invalid("conditioning site or block length out of range"));
        }
        if residual.as_ref().is_some_and(|r| r.n_sites() != n_sites) {
            return Err(Error::DimensionMismatch("residual sampler has a different site count".into()));
        }
        if !(noise_sd >= 0.0 && beta >= 0.0) {
            return Err(Error::invalid("noise sd and β must be non-negative"));
        }
        Ok(Self { n_sites, ell, conditioning_site, alpha, gamma, beta, noise_sd, residual })
    }

    /// Simulator at the posterior means of the hyperparameters and latent splines.
    pub fn from_fit(fit: &PosteriorFit) -> Result<Self> {
        Self::from_model(fit.model(), &fit.latent_mean(), &fit.hyper_mean())
    }

    /// Simulator for a model at fixed latent values and hyperparameters.
    pub fn from_model(model: &AssembledModel, latent: &[f64], h: &HyperParams) -> Result<Self> {
        let (d, ell) = (model.n_sites(), model.block_length());
        let mut alpha = Vec::with_capacity(d * ell);
        let mut gamma = Vec::with_capacity(d * ell);
        for t in 0..ell {
            for &dist in model.site_distances() {
                alpha.push(model.alpha_at(latent, h, dist, t)?);
                gamma.push(model.gamma_at(latent, dist, t)?);
            }
        }
        let residual = ResidualSampler::for_model(model, h)?;
        Self::new(d, ell, model.conditioning_site(), alpha, gamma, model.beta(h), h.noise_sd, residual)
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn block_length(&self) -> usize {
        self.ell
    }

    pub fn conditioning_site(&self) -> usize {
        self.conditioning_site
    }

    /// One episode given the conditioning value, indexed `t * d + i`.
    pub fn simulate_one<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> Vec<f64> {
        let z = self.residual.as_ref().map(|r| r.sample(rng));
        let scale = if self.beta == 0.0 { 1.0 } else { x.powf(self.beta) };
        let mut out = Vec::with_capacity(self.alpha.len());
        for k in 0..self.alpha.len() {
            if k == self.conditioning_site {
                let _: f64 = rng.sample(StandardNormal);
                out.push(x);
                continue;
            }
            let eps: f64 = rng.sample(StandardNormal);
            let zk = z.as_ref().map_or(0.0, |z| z[k]);
            out.push(x * self.alpha[k] + self.gamma[k] + scale * zk + self.noise_sd * eps);
        }
        out
    }

    /// Episodes for given conditioning values; episode `j` uses stream `j` of `seed`.
    pub fn simulate_given(&self, xs: &[f64], seed: u64, exec: Execution) -> Vec<Vec<f64>> {
        map_indexed(xs.len(), exec, |j| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(j as u64);
            self.simulate_one(xs[j], &mut rng)
        })
    }

    /// `n` episodes with conditioning values `threshold + Exp(1)`.
    pub fn simulate(&self, n: usize, threshold: f64, seed: u64, exec: Execution) -> Vec<(f64, Vec<f64>)> {
        map_indexed(n, exec, |j| self.simulate_episode(j as u64, threshold, seed))
    }

    /// Episode `j` of [`simulate`](Self::simulate), computed on its own.
    pub fn simulate_episode(&self, j: u64, threshold: f64, seed: u64) -> (f64, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(j);
        let e: f64 = Exp1.sample(&mut rng);
        let x = threshold + e;
        (x, self.simulate_one(x, &mut rng))
    }

    /// Simulated episodes packaged as an [`EpisodeSet`].
    pub fn simulate_episodes(&self, n: usize, threshold: f64, seed: u64, exec: Execution) -> EpisodeSet {
        let episodes = self
            .simulate(n, threshold, seed, exec)
            .into_iter()
            .enumerate()
            .map(|(j, (x, values))| {
                let mut field = Field::missing(self.n_sites, self.ell);
                for t in 0..self.ell {
                    for i in 0..self.n_sites {
                        field.set(i, t, values[t * self.n_sites + i]);
                    }
                }
                Episode { start: j, conditioning_value: x, values: field }
            })
            .collect();
        EpisodeSet {
            conditioning_site: self.conditioning_site,
            threshold,
            n_sites: self.n_sites,
            block_length: self.ell,
            episodes,
        }
    }
}
