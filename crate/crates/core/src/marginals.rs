//! Per-site marginal models (empirical body, generalized Pareto tail), the
//! transformation to standard-Laplace margins, and the empirical tail
//! correlation `χ_q`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::optim::nelder_mead;
use crate::par::{try_map_indexed, Execution};
use crate::stats::{laplace_cdf, quantile_sorted};

const MIN_SAMPLE: usize = 50;
const MIN_EXCEEDANCES: usize = 20;
const XI_ZERO: f64 = 1e-9;

/// Semiparametric marginal distribution of one site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalModel {
    #[serde(default)]
    pub site_id: String,
    /// Threshold `v`, the empirical `1 − λ_v` quantile.
    pub v: f64,
    /// Exceedance probability `λ_v`.
    pub lambda_v: f64,
    /// GPD scale.
    pub sigma_v: f64,
    /// GPD shape.
    pub xi: f64,
    /// Sorted fitting observations below the threshold.
    pub body_quantiles: Vec<f64>,
    /// Size of the fitting sample.
    pub n: usize,
}

fn gpd_neg_log_lik(excess: &[f64], log_sigma: f64, xi: f64) -> f64 {
    let sigma = log_sigma.exp();
    let n = excess.len() as f64;
    if xi.abs() < XI_ZERO {
        return n * log_sigma + excess.iter().sum::<f64>() / sigma;
    }
    let mut s = 0.0;
    for &z in excess {
        let t = xi * z / sigma;
        if t <= -1.0 {
            return f64::INFINITY;
        }
        s += t.ln_1p();
    }
    n * log_sigma + (1.0 + 1.0 / xi) * s
}

/// Maximum-likelihood GPD fit above the empirical `quantile`.
pub fn fit_gpd(sample: &[f64], quantile: f64) -> Result<MarginalModel> {
    if !(quantile > 0.5 && quantile < 1.0) {
        return Err(Error::invalid(format!("quantile {quantile} must lie in (0.5, 1)")));
    }
    if let Some(bad) = sample.iter().find(|v| !v.is_finite()) {
        return Err(Error::Data(format!("non-finite sample value {bad}")));
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n == 0 {
        return Err(Error::TooFewExceedances { found: 0, required: MIN_EXCEEDANCES });
    }
    let v = quantile_sorted(&sorted, quantile);
    let excess: Vec<f64> = sorted.iter().filter(|&&y| y > v).map(|y| y - v).collect();
    if excess.len() < MIN_EXCEEDANCES {
        return Err(Error::TooFewExceedances { found: excess.len(), required: MIN_EXCEEDANCES });
    }
    if n < MIN_SAMPLE {
        return Err(Error::SampleTooSmall { found: n, required: MIN_SAMPLE });
    }

    let m = excess.iter().sum::<f64>() / excess.len() as f64;
    let s2 = excess.iter().map(|z| (z - m).powi(2)).sum::<f64>() / (excess.len() as f64 - 1.0);
    let mut xi0 = (0.5 * (1.0 - m * m / s2)).clamp(-0.4, 0.4);
    let mut sigma0 = 0.5 * m * (m * m / s2 + 1.0);
    if !gpd_neg_log_lik(&excess, sigma0.ln(), xi0).is_finite() {
        xi0 = 0.0;
        sigma0 = m;
    }
    let best = nelder_mead(|p| gpd_neg_log_lik(&excess, p[0], p[1]), &[sigma0.ln(), xi0], 0.1, 4000, 1e-12)?;
    let (sigma_v, xi) = (best.x[0].exp(), best.x[1]);
    if xi.abs() >= 0.5 {
        log::warn!("fitted GPD shape {xi:.3} lies outside (-0.5, 0.5)");
    }
    let body_quantiles = sorted.into_iter().filter(|&y| y < v).collect();
    Ok(MarginalModel { site_id: String::new(), v, lambda_v: 1.0 - quantile, sigma_v, xi, body_quantiles, n })
}

impl MarginalModel {
    fn body_level(&self, k: usize) -> f64 {
        (k + 1) as f64 / (self.n as f64 + 1.0)
    }

    fn floor_level(&self) -> f64 {
        1.0 / (self.n as f64 + 1.0)
    }

    /// Upper endpoint of the tail, finite only for negative shape.
    pub fn upper_endpoint(&self) -> f64 {
        if self.xi < 0.0 {
            self.v - self.sigma_v / self.xi
        } else {
            f64::INFINITY
        }
    }

    /// Semiparametric CDF.
    pub fn cdf(&self, y: f64) -> Result<f64> {
        if y > self.v {
            Ok(1.0 - self.lambda_v * (-self.tail_log_survival(y)?).exp())
        } else {
            Ok(self.body_cdf(y))
        }
    }

    // log of (1 − F(y)) / λ_v, nonpositive above v
    fn tail_log_survival(&self, y: f64) -> Result<f64> {
        let z = y - self.v;
        if self.xi.abs() < XI_ZERO {
            return Ok(z / self.sigma_v);
        }
        let t = self.xi * z / self.sigma_v;
        if t <= -1.0 {
            return Err(Error::BeyondEndpoint { value: y, endpoint: self.upper_endpoint() });
        }
        Ok(t.ln_1p() / self.xi)
    }

    fn body_cdf(&self, y: f64) -> f64 {
        let body = &self.body_quantiles;
        let top = 1.0 - self.lambda_v;
        // rightmost knot at or below y
        let k = body.partition_point(|&b| b <= y);
        if k == 0 {
            return match body.first() {
                Some(_) => self.floor_level(),
                None => top,
            };
        }
        let (x0, p0) = (body[k - 1], self.body_level(k - 1));
        let (x1, p1) = if k < body.len() { (body[k], self.body_level(k)) } else { (self.v, top) };
        if x1 <= x0 {
            return p0;
        }
        p0 + (p1 - p0) * (y - x0) / (x1 - x0)
    }

    fn body_inverse(&self, p: f64) -> f64 {
        let body = &self.body_quantiles;
        if body.is_empty() || p <= self.floor_level() {
            return body.first().copied().unwrap_or(self.v);
        }
        let top = 1.0 - self.lambda_v;
        let level = |k: usize| if k < body.len() { self.body_level(k) } else { top };
        let point = |k: usize| if k < body.len() { body[k] } else { self.v };
        // first knot whose level reaches p
        let mut lo = 0;
        let mut hi = body.len();
        while lo < hi {
            let mid = (lo + hi) / 2;
            if level(mid) < p {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        if lo == 0 {
            return point(0);
        }
        let (x0, p0, x1, p1) = (point(lo - 1), level(lo - 1), point(lo), level(lo));
        if p1 <= p0 {
            return x1;
        }
        x0 + (x1 - x0) * (p - p0) / (p1 - p0)
    }

    /// Transforms a data value to the standard-Laplace scale.
    pub fn to_laplace(&self, y: f64) -> Result<f64> {
        if y > self.v {
            return Ok(-(2.0 * self.lambda_v).ln() + self.tail_log_survival(y)?);
        }
        let f = self.body_cdf(y);
        Ok(if f <= 0.5 { (2.0 * f).ln() } else { -(2.0 * (1.0 - f)).ln() })
    }

    /// Inverse of [`to_laplace`](Self::to_laplace).
    pub fn from_laplace(&self, x: f64) -> f64 {
        let t = x + (2.0 * self.lambda_v).ln();
        if t >= 0.0 {
            let z = if self.xi.abs() < XI_ZERO {
                self.sigma_v * t
            } else {
                self.sigma_v * (self.xi * t).exp_m1() / self.xi
            };
            return self.v + z;
        }
        self.body_inverse(laplace_cdf(x))
    }
}

/// Fits every site of `raw` and returns the models and the Laplace-scale field.
pub fn transform_field(raw: &Field, quantile: f64, exec: Execution) -> Result<(Vec<MarginalModel>, Field)> {
    let models = try_map_indexed(raw.n_sites(), exec, |s| {
        fit_gpd(&raw.site_values(s), quantile).map_err(|e| match e {
            Error::TooFewExceedances { .. } | Error::SampleTooSmall { .. } => {
                Error::Data(format!("site {s}: {e}"))
            }
            other => other,
        })
    })?;
    let mut out = Field::missing(raw.n_sites(), raw.n_times());
    for (s, m) in models.iter().enumerate() {
        for t in 0..raw.n_times() {
            if let Some(y) = raw.get(s, t) {
                out.set(s, t, m.to_laplace(y)?);
            }
        }
    }
    Ok((models, out))
}

/// Average ranks (ties share their mean rank), 1-based.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Empirical `χ_q`: share of `a`'s exceedances of its q-level at which `b` also exceeds its q-level.
pub fn chi_q(a: &[f64], b: &[f64], q: f64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!("series lengths {} and {}", a.len(), b.len())));
    }
    if a.len() < 20 {
        return Err(Error::SampleTooSmall { found: a.len(), required: 20 });
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::invalid(format!("q = {q} must lie in (0, 1)")));
    }
    let n1 = a.len() as f64 + 1.0;
    let ra = average_ranks(a);
    let rb = average_ranks(b);
    let mut cond = 0usize;
    let mut joint = 0usize;
    for (x, y) in ra.iter().zip(&rb) {
        if x / n1 > q {
            cond += 1;
            if y / n1 > q {
                joint += 1;
            }
        }
    }
    if cond == 0 {
        return Err(Error::TooFewExceedances { found: 0, required: 1 });
    }
    Ok(joint as f64 / cond as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Exp};

    fn exp_sample(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Exp::new(1.0).unwrap().sample_iter(&mut rng).take(n).collect()
    }

    #[test]
    fn exponential_tail_recovered() {
        let m = fit_gpd(&exp_sample(10_000, 1), 0.95).unwrap();
        assert!(m.xi.abs() < 0.1, "xi {}", m.xi);
        assert!((m.sigma_v - 1.0).abs() < 0.15, "sigma {}", m.sigma_v);
        assert_eq!(m.lambda_v, 1.0 - 0.95);
        assert!((m.lambda_v - 0.05).abs() < 1e-15);
    }

    #[test]
    fn short_sample_rejected() {
        assert!(matches!(fit_gpd(&exp_sample(30, 2), 0.95), Err(Error::TooFewExceedances { .. })));
        assert!(fit_gpd(&exp_sample(500, 2), 0.4).is_err());
    }

    #[test]
    fn anchor_values() {
        let sample = exp_sample(2001, 3);
        let m = fit_gpd(&sample, 0.95).unwrap();
        let mut s = sample.clone();
        s.sort_by(f64::total_cmp);
        let median = quantile_sorted(&s, 0.5);
        assert!(m.to_laplace(median).unwrap().abs() < 1e-12);
        assert!((m.from_laplace(0.0) - median).abs() < 1e-12);
        assert!((m.to_laplace(m.v).unwrap() + 0.1f64.ln()).abs() < 1e-12);
        assert!((m.cdf(m.v).unwrap() - 0.95).abs() < 1e-12);
        assert!((m.cdf(m.v + 1e-12).unwrap() - 0.95).abs() < 1e-9);
    }

    #[test]
    fn tail_inverse_closed_form() {
        let m = fit_gpd(&exp_sample(5000, 4), 0.95).unwrap();
        let x = -(0.02f64).ln();
        let expect = m.v + m.sigma_v / m.xi * ((0.01 / m.lambda_v).powf(-m.xi) - 1.0);
        assert!((m.from_laplace(x) - expect).abs() < 1e-10 * expect);
        let flat = MarginalModel { xi: 0.0, ..m.clone() };
        let f = 0.99;
        let expect = flat.v + flat.sigma_v * (flat.lambda_v / (1.0 - f)).ln();
        assert!((flat.from_laplace(x) - expect).abs() < 1e-10 * expect);
    }

    #[test]
    fn beyond_endpoint_is_error() {
        let m = MarginalModel {
            site_id: String::new(),
            v: 1.0,
            lambda_v: 0.05,
            sigma_v: 1.0,
            xi: -0.5,
            body_quantiles: vec![0.0, 0.5],
            n: 3,
        };
        assert_eq!(m.upper_endpoint(), 3.0);
        assert!(matches!(m.to_laplace(3.5), Err(Error::BeyondEndpoint { .. })));
    }

    #[test]
    fn chi_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a: Vec<f64> = (0..1000).map(|_| rand::Rng::random::<f64>(&mut rng)).collect();
        assert_eq!(chi_q(&a, &a, 0.9).unwrap(), 1.0);
        let rev: Vec<f64> = a.iter().map(|x| -x).collect();
        assert_eq!(chi_q(&a, &rev, 0.9).unwrap(), 0.0);
        assert!(chi_q(&a[..10], &a[..10], 0.9).is_err());
    }

    #[test]
    fn json_round_trip() {
        let m = fit_gpd(&exp_sample(500, 6), 0.9).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        let back: MarginalModel = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
    }
}
