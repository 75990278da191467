//! WAIC, conditional predictive ordinates and probability integral transforms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::fit::PosteriorFit;
use crate::par::{map_indexed, try_map_indexed, Execution};
use crate::stats::{normal_ln_pdf, std_normal_cdf};

const CHUNK: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaicResult {
    /// `−2 (lppd − p_eff)`; smaller is better.
    pub waic: f64,
    /// Log pointwise predictive density.
    pub lppd: f64,
    /// Effective number of parameters (sum of pointwise variances).
    pub p_eff: f64,
    pub samples: usize,
}

/// Streaming per-observation log-mean-exp and variance.
#[derive(Debug, Clone)]
struct PointwiseAccumulator {
    count: usize,
    max: Vec<f64>,
    scaled_sum: Vec<f64>,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl PointwiseAccumulator {
    fn new(n: usize) -> Self {
        Self { count: 0, max: vec![f64::NEG_INFINITY; n], scaled_sum: vec![0.0; n], mean: vec![0.0; n], m2: vec![0.0; n] }
    }

    fn push(&mut self, ll: &[f64]) {
        self.count += 1;
        let c = self.count as f64;
        for i in 0..ll.len() {
            let v = ll[i];
            if v > self.max[i] {
                self.scaled_sum[i] = self.scaled_sum[i] * (self.max[i] - v).exp() + 1.0;
                self.max[i] = v;
            } else {
                self.scaled_sum[i] += (v - self.max[i]).exp();
            }
            let delta = v - self.mean[i];
            self.mean[i] += delta / c;
            self.m2[i] += delta * (v - self.mean[i]);
        }
    }

    fn finish(&self) -> Result<WaicResult> {
        if self.count < 2 {
            return Err(Error::SampleTooSmall { found: self.count, required: 2 });
        }
        let s = self.count as f64;
        let lppd: f64 = self.max.iter().zip(&self.scaled_sum).map(|(m, e)| m + (e / s).ln()).sum();
        let p_eff: f64 = self.m2.iter().map(|m2| m2 / (s - 1.0)).sum();
        Ok(WaicResult { waic: -2.0 * (lppd - p_eff), lppd, p_eff, samples: self.count })
    }
}

/// WAIC from pointwise log-likelihood draws (one vector per posterior draw).
pub fn waic_from_log_lik<I>(draws: I) -> Result<WaicResult>
where
    I: IntoIterator<Item = Vec<f64>>,
{
    let mut acc: Option<PointwiseAccumulator> = None;
    for ll in draws {
        let a = acc.get_or_insert_with(|| PointwiseAccumulator::new(ll.len()));
        if ll.len() != a.max.len() {
            return Err(Error::DimensionMismatch("draws have different observation counts".into()));
        }
        a.push(&ll);
    }
    acc.ok_or(Error::SampleTooSmall { found: 0, required: 2 })?.finish()
}

/// Pointwise log-likelihood of the observed likelihood rows for draw `index`.
fn draw_log_lik(fit: &PosteriorFit, seed: u64, index: u64) -> Vec<f64> {
    let model = fit.model();
    let draw = fit.draw(seed, index);
    let h = &fit.grid()[draw.grid_index].params;
    let offset = model.offset(h);
    let eta = model.likelihood_design().mul_vec(&draw.latent);
    model
        .likelihood_rows()
        .iter()
        .zip(eta)
        .map(|(&r, e)| normal_ln_pdf(model.response()[r], offset[r] + e, h.noise_sd))
        .collect()
}

/// WAIC over `samples` posterior draws.
pub fn waic(fit: &PosteriorFit, samples: usize, seed: u64, exec: Execution) -> Result<WaicResult> {
    if samples < 2 {
        return Err(Error::SampleTooSmall { found: samples, required: 2 });
    }
    if samples < 500 {
        log::warn!("WAIC from {samples} draws; at least 500 are recommended");
    }
    let mut acc = PointwiseAccumulator::new(fit.model().likelihood_rows().len());
    let mut start = 0;
    while start < samples {
        let len = CHUNK.min(samples - start);
        for ll in map_indexed(len, exec, |k| draw_log_lik(fit, seed, (start + k) as u64)) {
            acc.push(&ll);
        }
        start += len;
    }
    acc.finish()
}

/// How leave-one-out quantities are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum CpoMethod {
    /// Exact Gaussian leave-one-out at each grid point, combined over the grid
    /// by the harmonic-mean identity.
    Integrated,
    /// Harmonic-mean and importance-weighted estimators over posterior draws.
    Sampled { samples: usize, seed: u64 },
}

/// CPO and PIT for each likelihood row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpoPit {
    /// Model row of each entry.
    pub rows: Vec<usize>,
    pub cpo: Vec<f64>,
    pub pit: Vec<f64>,
    /// False where a predictive density underflowed; such entries are left out of the means.
    pub reliable: Vec<bool>,
    pub mean_log_cpo: f64,
    pub mean_cpo: f64,
}

// per-observation running sums of w / p and w Φ / p
#[derive(Debug, Clone)]
struct LooAccumulator {
    inv: Vec<f64>,
    cdf: Vec<f64>,
    weight: f64,
    reliable: Vec<bool>,
}

impl LooAccumulator {
    fn new(n: usize) -> Self {
        Self { inv: vec![0.0; n], cdf: vec![0.0; n], weight: 0.0, reliable: vec![true; n] }
    }

    fn push(&mut self, w: f64, dens: &[f64], cdf: &[f64]) {
        self.weight += w;
        for i in 0..dens.len() {
            if !(dens[i] > 1e-300) || !dens[i].is_finite() {
                self.reliable[i] = false;
                continue;
            }
            self.inv[i] += w / dens[i];
            self.cdf[i] += w * cdf[i] / dens[i];
        }
    }

    fn finish(self, rows: Vec<usize>) -> CpoPit {
        let cpo: Vec<f64> = self.inv.iter().map(|s| self.weight / s).collect();
        let pit: Vec<f64> = self.cdf.iter().zip(&self.inv).map(|(c, s)| (c / s).clamp(0.0, 1.0)).collect();
        let kept: Vec<usize> = (0..cpo.len()).filter(|&i| self.reliable[i] && cpo[i] > 0.0).collect();
        let n = kept.len().max(1) as f64;
        let mean_log_cpo = kept.iter().map(|&i| cpo[i].ln()).sum::<f64>() / n;
        let mean_cpo = kept.iter().map(|&i| cpo[i]).sum::<f64>() / n;
        CpoPit { rows, cpo, pit, reliable: self.reliable, mean_log_cpo, mean_cpo }
    }
}

/// CPO and PIT from draws of the linear predictor and noise sd.
pub fn cpo_pit_from_draws<I>(rows: Vec<usize>, values: &[f64], draws: I) -> Result<CpoPit>
where
    I: IntoIterator<Item = (Vec<f64>, f64)>,
{
    let mut acc = LooAccumulator::new(values.len());
    let mut count = 0;
    for (eta, sd) in draws {
        if eta.len() != values.len() {
            return Err(Error::DimensionMismatch("predictor draw length differs from observations".into()));
        }
        let dens: Vec<f64> = values.iter().zip(&eta).map(|(v, e)| normal_ln_pdf(*v, *e, sd).exp()).collect();
        let cdf: Vec<f64> = values.iter().zip(&eta).map(|(v, e)| std_normal_cdf((v - e) / sd)).collect();
        acc.push(1.0, &dens, &cdf);
        count += 1;
    }
    if count == 0 {
        return Err(Error::SampleTooSmall { found: 0, required: 1 });
    }
    Ok(acc.finish(rows))
}

/// Leave-one-out CPO and PIT of every likelihood row.
pub fn cpo_pit(fit: &PosteriorFit, method: CpoMethod, exec: Execution) -> Result<CpoPit> {
    let model = fit.model();
    let rows = model.likelihood_rows().to_vec();
    let values: Vec<f64> = rows.iter().map(|&r| model.response()[r]).collect();
    match method {
        CpoMethod::Sampled { samples, seed } => {
            if samples < 500 {
                log::warn!("CPO/PIT from {samples} draws; at least 500 are recommended");
            }
            let design = model.likelihood_design();
            let draws = map_indexed(samples, exec, |s| {
                let d = fit.draw(seed, s as u64);
                let h = &fit.grid()[d.grid_index].params;
                let offset = model.offset(h);
                let eta: Vec<f64> = design.mul_vec(&d.latent).iter().zip(&rows).map(|(e, &r)| e + offset[r]).collect();
                (eta, h.noise_sd)
            });
            cpo_pit_from_draws(rows, &values, draws)
        }
        CpoMethod::Integrated => {
            let design = model.likelihood_design();
            let per_point = try_map_indexed(fit.grid().len(), exec, |k| {
                let p = &fit.grid()[k];
                let selinv = p.conditional.factor().selected_inverse();
                let offset = model.offset(&p.params);
                let mean = design.mul_vec(p.conditional.mean());
                let s2 = p.params.noise_variance();
                let mut dens = Vec::with_capacity(rows.len());
                let mut cdf = Vec::with_capacity(rows.len());
                for (i, &r) in rows.iter().enumerate() {
                    let (idx, vals) = design.row(i);
                    let var = p.conditional.linear_variance(&selinv, idx, vals)?;
                    let mu = offset[r] + mean[i];
                    // remove observation i from the Gaussian posterior of its predictor
                    let prec = (1.0 / var.max(1e-300) - 1.0 / s2).max(1e-12);
                    let loo_mean = (mu / var.max(1e-300) - values[i] / s2) / prec;
                    let loo_mean = if var > 0.0 { loo_mean } else { mu };
                    let loo_var = if var > 0.0 { 1.0 / prec } else { 0.0 };
                    let sd = (loo_var + s2).sqrt();
                    dens.push(normal_ln_pdf(values[i], loo_mean, sd).exp());
                    cdf.push(std_normal_cdf((values[i] - loo_mean) / sd));
                }
                Ok((dens, cdf))
            })?;
            let mut acc = LooAccumulator::new(values.len());
            for (p, (dens, cdf)) in fit.grid().iter().zip(per_point) {
                acc.push(p.weight, &dens, &cdf);
            }
            Ok(acc.finish(rows))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_draws_have_no_variance_term() {
        let ll = vec![-1.0, -2.5, -0.3];
        let r = waic_from_log_lik(vec![ll.clone(); 10]).unwrap();
        assert!(r.p_eff.abs() < 1e-15);
        assert!((r.waic - (-2.0 * ll.iter().sum::<f64>())).abs() < 1e-12);
    }

    #[test]
    fn waic_matches_direct_formula() {
        let draws: Vec<Vec<f64>> = (0..50).map(|s| vec![-(s as f64 * 0.37).sin().abs() - 1.0, -(s as f64 * 0.11).cos().abs()]).collect();
        let r = waic_from_log_lik(draws.clone()).unwrap();
        let s = draws.len() as f64;
        let mut lppd = 0.0;
        let mut p = 0.0;
        for i in 0..2 {
            let col: Vec<f64> = draws.iter().map(|d| d[i]).collect();
            lppd += (col.iter().map(|v| v.exp()).sum::<f64>() / s).ln();
            let m = col.iter().sum::<f64>() / s;
            p += col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (s - 1.0);
        }
        assert!((r.lppd - lppd).abs() < 1e-12);
        assert!((r.p_eff - p).abs() < 1e-12);
        assert!(r.p_eff >= 0.0);
        assert!(waic_from_log_lik(vec![vec![0.0]]).is_err());
    }

    #[test]
    fn degenerate_posterior_cpo_pit() {
        let values = [0.3, -1.2, 2.0];
        let eta = vec![0.1, -1.0, 0.5];
        let sd = 0.7;
        let r = cpo_pit_from_draws(vec![0, 1, 2], &values, vec![(eta.clone(), sd); 20]).unwrap();
        for i in 0..3 {
            assert!((r.cpo[i] - normal_ln_pdf(values[i], eta[i], sd).exp()).abs() < 1e-14);
            assert!((r.pit[i] - std_normal_cdf((values[i] - eta[i]) / sd)).abs() < 1e-12);
        }
    }

    #[test]
    fn outlier_has_smallest_cpo() {
        let values = [0.1, -0.2, 9.0, 0.4];
        let draws: Vec<(Vec<f64>, f64)> = (0..100).map(|s| (vec![0.05 * (s % 5) as f64; 4], 1.0)).collect();
        let r = cpo_pit_from_draws(vec![0, 1, 2, 3], &values, draws).unwrap();
        let min = r.cpo.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(r.cpo[2], min);
    }
}
