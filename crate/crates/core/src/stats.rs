//! Small distribution and testing helpers.

use statrs::function::erf::erfc;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

pub fn normal_ln_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * z * z - sd.ln() - LN_SQRT_2PI
}

pub fn normal_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    normal_ln_pdf(x, mean, sd).exp()
}

pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// CDF of the standard Laplace distribution.
pub fn laplace_cdf(x: f64) -> f64 {
    if x < 0.0 {
        0.5 * x.exp()
    } else {
        1.0 - 0.5 * (-x).exp()
    }
}

/// Quantile function of the standard Laplace distribution.
pub fn laplace_quantile(p: f64) -> f64 {
    if p <= 0.5 {
        (2.0 * p).ln()
    } else {
        -(2.0 * (1.0 - p)).ln()
    }
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance.
pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Interpolated sample quantile with plotting positions `k / (n + 1)`.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let h = p * (n as f64 + 1.0);
    if h <= 1.0 {
        return sorted[0];
    }
    if h >= n as f64 {
        return sorted[n - 1];
    }
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    sorted[lo - 1] + frac * (sorted[lo] - sorted[lo - 1])
}

/// One-sample Kolmogorov–Smirnov statistic against a continuous CDF.
pub fn ks_statistic(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i as f64 + 1.0) / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic 1% critical value of the one-sample KS statistic.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.6276 / (n as f64).sqrt()
}

/// Jarque–Bera normality statistic; asymptotically χ² with 2 degrees of freedom.
pub fn jarque_bera(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = mean(x);
    let m2 = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    let m3 = x.iter().map(|v| (v - m).powi(3)).sum::<f64>() / n;
    let m4 = x.iter().map(|v| (v - m).powi(4)).sum::<f64>() / n;
    let skew = m3 / m2.powf(1.5);
    let kurt = m4 / (m2 * m2);
    n / 6.0 * (skew * skew + 0.25 * (kurt - 3.0).powi(2))
}

/// 1% critical value of χ² with 2 degrees of freedom.
pub const JARQUE_BERA_CRITICAL_1PCT: f64 = 9.2103;

/// Modified Bessel function of the second kind, `K_ν(x)` for `x > 0`,
/// from the integral `∫₀^∞ exp(−x cosh t) cosh(ν t) dt`.
pub fn bessel_k(nu: f64, x: f64) -> f64 {
    assert!(x > 0.0, "bessel_k needs a positive argument");
    // the integrand decays doubly exponentially, so the trapezoid rule converges fast
    let upper = ((60.0 / x).max(2.0) + 1.0).ln().max(1.0) + 2.0;
    let steps = 4000;
    let h = upper / steps as f64;
    let f = |t: f64| (-x * t.cosh()).exp() * (nu * t).cosh();
    let mut s = 0.5 * (f(0.0) + f(upper));
    for k in 1..steps {
        s += f(k as f64 * h);
    }
    s * h
}

/// Matérn correlation with smoothness `ν` and scale `κ` at distance `h`.
pub fn matern_correlation(h: f64, kappa: f64, nu: f64) -> f64 {
    if h <= 0.0 {
        return 1.0;
    }
    let x = kappa * h;
    if nu == 0.5 {
        return (-x).exp();
    }
    let g = statrs::function::gamma::gamma(nu);
    2f64.powf(1.0 - nu) / g * x.powf(nu) * bessel_k(nu, x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn laplace_quantile_inverts_cdf() {
        for &p in &[0.01, 0.3, 0.5, 0.9, 0.999] {
            assert!((laplace_cdf(laplace_quantile(p)) - p).abs() < 1e-14);
        }
    }

    #[test]
    fn bessel_matches_closed_form() {
        for &x in &[0.05, 0.5, 1.0, 3.0, 10.0] {
            let exact = (std::f64::consts::PI / (2.0 * x)).sqrt() * (-x).exp();
            assert!((bessel_k(0.5, x) - exact).abs() < 1e-10 * exact.max(1e-300));
            assert!((matern_correlation(x, 1.0, 1.5) - (1.0 + x) * (-x).exp()).abs() < 1e-10);
        }
        assert!((bessel_k(0.0, 1.0) - 0.421_024_438_240_708_3).abs() < 1e-12);
    }

    #[test]
    fn quantile_interpolates() {
        let s: Vec<f64> = (1..=9).map(f64::from).collect();
        assert_eq!(quantile_sorted(&s, 0.5), 5.0);
        assert!((quantile_sorted(&s, 0.25) - 2.5).abs() < 1e-14);
    }

    #[test]
    fn normal_cdf_values() {
        assert!((std_normal_cdf(0.0) - 0.5).abs() < 1e-15);
        let v = std_normal_cdf(1.959_963_984_540_054);
        assert!((v - 0.975).abs() < 1e-11, "{v}");
    }
}
