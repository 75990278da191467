//! Derivative-free minimizers: Nelder–Mead and quasi-Newton BFGS on
//! central finite-difference gradients.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::par::{map_indexed, Execution};

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    /// Objective value after each iteration.
    pub trace: Vec<f64>,
}

fn finite_or_inf(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

/// Nelder–Mead simplex minimization.
pub fn nelder_mead<F>(f: F, x0: &[f64], step: f64, max_iter: usize, tol: f64) -> Result<Minimum>
where
    F: Fn(&[f64]) -> f64,
{
    let n = x0.len();
    let eval = |x: &[f64]| finite_or_inf(f(x));
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), eval(x0)));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += step;
        let v = eval(&x);
        simplex.push((x, v));
    }
    let mut trace = Vec::new();
    let combine = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> { a.iter().zip(b).map(|(p, q)| p + t * (q - p)).collect() };

    for iter in 0..max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        trace.push(simplex[0].1);
        let spread = simplex[n].1 - simplex[0].1;
        let size = simplex
            .iter()
            .skip(1)
            .map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if spread.is_finite() && spread.abs() < tol && size < tol.sqrt() {
            return Ok(Minimum { x: simplex[0].0.clone(), value: simplex[0].1, iterations: iter, trace });
        }
        let mut centroid = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for (c, v) in centroid.iter_mut().zip(x) {
                *c += v / n as f64;
            }
        }
        let worst = simplex[n].0.clone();
        let reflected = combine(&centroid, &worst, -1.0);
        let fr = eval(&reflected);
        if fr < simplex[0].1 {
            let expanded = combine(&centroid, &worst, -2.0);
            let fe = eval(&expanded);
            simplex[n] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (reflected, fr);
        } else {
            let (target, ft) = if fr < simplex[n].1 { (reflected, fr) } else { (worst, simplex[n].1) };
            let contracted = combine(&centroid, &target, 0.5);
            let fc = eval(&contracted);
            if fc < ft {
                simplex[n] = (contracted, fc);
            } else {
                let best = simplex[0].0.clone();
                for item in simplex.iter_mut().skip(1) {
                    let x = combine(&best, &item.0, 0.5);
                    let v = eval(&x);
                    *item = (x, v);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    Err(Error::NonConvergence {
        iterations: max_iter,
        message: format!("simplex spread {:e}", simplex[n].1 - simplex[0].1),
        trace,
    })
}

/// Settings for [`bfgs`].
#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Stop when the objective changes by less than this over an iteration.
    pub f_tol: f64,
    /// Finite-difference step.
    pub fd_step: f64,
    /// Largest step length (Euclidean) taken in one line search.
    pub max_step: f64,
    pub execution: Execution,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self { max_iter: 200, f_tol: 1e-6, fd_step: 1e-3, max_step: 2.0, execution: Execution::Parallel }
    }
}

/// Central-difference gradient; the `2n` evaluations run per `exec`.
pub fn fd_gradient<F>(f: &F, x: &[f64], h: f64, exec: Execution) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64 + Sync + Send,
{
    let n = x.len();
    let vals = map_indexed(2 * n, exec, |k| {
        let mut y = x.to_vec();
        y[k / 2] += if k % 2 == 0 { h } else { -h };
        f(&y)
    });
    (0..n).map(|i| (vals[2 * i] - vals[2 * i + 1]) / (2.0 * h)).collect()
}

/// Central-difference Hessian.
pub fn fd_hessian<F>(f: &F, x: &[f64], h: f64, exec: Execution) -> DMatrix<f64>
where
    F: Fn(&[f64]) -> f64 + Sync + Send,
{
    let n = x.len();
    let mut points: Vec<Vec<f64>> = vec![x.to_vec()];
    for i in 0..n {
        for s in [h, -h] {
            let mut y = x.to_vec();
            y[i] += s;
            points.push(y);
        }
    }
    for i in 0..n {
        for j in 0..i {
            for (si, sj) in [(h, h), (h, -h), (-h, h), (-h, -h)] {
                let mut y = x.to_vec();
                y[i] += si;
                y[j] += sj;
                points.push(y);
            }
        }
    }
    let vals = map_indexed(points.len(), exec, |k| f(&points[k]));
    let f0 = vals[0];
    let mut hess = DMatrix::zeros(n, n);
    for i in 0..n {
        hess[(i, i)] = (vals[1 + 2 * i] - 2.0 * f0 + vals[2 + 2 * i]) / (h * h);
    }
    let mut k = 1 + 2 * n;
    for i in 0..n {
        for j in 0..i {
            let v = (vals[k] - vals[k + 1] - vals[k + 2] + vals[k + 3]) / (4.0 * h * h);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
            k += 4;
        }
    }
    hess
}

/// Minimizes `f` by BFGS with finite-difference gradients and backtracking.
pub fn bfgs<F>(f: F, x0: &[f64], opts: &BfgsOptions) -> Result<Minimum>
where
    F: Fn(&[f64]) -> f64 + Sync + Send,
{
    let n = x0.len();
    let eval = |x: &[f64]| finite_or_inf(f(x));
    let mut x = DVector::from_column_slice(x0);
    let mut fx = eval(x0);
    if !fx.is_finite() {
        return Err(Error::NonConvergence {
            iterations: 0,
            message: "objective is not finite at the starting point".into(),
            trace: vec![],
        });
    }
    let grad = |x: &DVector<f64>| DVector::from_vec(fd_gradient(&eval, x.as_slice(), opts.fd_step, opts.execution));
    let mut g = grad(&x);
    let mut hinv = DMatrix::<f64>::identity(n, n);
    let mut trace = vec![fx];
    let mut reset_once = false;

    for iter in 1..=opts.max_iter {
        let mut dir = -(&hinv * &g);
        if dir.dot(&g) >= 0.0 {
            hinv = DMatrix::identity(n, n);
            dir = -g.clone();
        }
        let norm = dir.norm();
        if norm > opts.max_step {
            dir *= opts.max_step / norm;
        }
        let slope = dir.dot(&g);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let trial = &x + &dir * t;
            let ft = eval(trial.as_slice());
            if ft <= fx + 1e-4 * t * slope {
                accepted = Some((trial, ft));
                break;
            }
            t *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            if reset_once || hinv == DMatrix::identity(n, n) {
                // no descent possible at finite-difference resolution
                return Ok(Minimum { x: x.as_slice().to_vec(), value: fx, iterations: iter, trace });
            }
            reset_once = true;
            hinv = DMatrix::identity(n, n);
            continue;
        };
        let g_new = grad(&x_new);
        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if iter == 1 || reset_once {
                let scale = sy / y.dot(&y);
                hinv = DMatrix::identity(n, n) * scale;
                reset_once = false;
            }
            let rho = 1.0 / sy;
            let i = DMatrix::<f64>::identity(n, n);
            let left = &i - &s * y.transpose() * rho;
            let right = &i - &y * s.transpose() * rho;
            hinv = &left * &hinv * &right + &s * s.transpose() * rho;
        }
        let change = fx - f_new;
        x = x_new;
        fx = f_new;
        g = g_new;
        trace.push(fx);
        if change.abs() < opts.f_tol {
            return Ok(Minimum { x: x.as_slice().to_vec(), value: fx, iterations: iter, trace });
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        message: format!("objective still changing at {fx}"),
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> f64 {
        (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
    }

    #[test]
    fn nelder_mead_finds_rosenbrock_minimum() {
        let m = nelder_mead(rosenbrock, &[-1.2, 1.0], 0.5, 5000, 1e-14).unwrap();
        assert!((m.x[0] - 1.0).abs() < 1e-4 && (m.x[1] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn bfgs_finds_quadratic_minimum() {
        let f = |x: &[f64]| 3.0 * (x[0] - 1.0).powi(2) + (x[0] - 1.0) * (x[1] + 2.0) + 2.0 * (x[1] + 2.0).powi(2);
        let opts = BfgsOptions { f_tol: 1e-12, ..Default::default() };
        let m = bfgs(f, &[5.0, 5.0], &opts).unwrap();
        assert!((m.x[0] - 1.0).abs() < 1e-4 && (m.x[1] + 2.0).abs() < 1e-4, "{:?}", m.x);
    }

    #[test]
    fn bfgs_reports_non_convergence() {
        let f = |x: &[f64]| -x[0];
        let opts = BfgsOptions { max_iter: 5, ..Default::default() };
        match bfgs(f, &[0.0], &opts) {
            Err(Error::NonConvergence { iterations, trace, .. }) => {
                assert_eq!(iterations, 5);
                assert_eq!(trace.len(), 6);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn hessian_of_quadratic_is_exact() {
        let f = |x: &[f64]| 2.0 * x[0] * x[0] + 3.0 * x[0] * x[1] + 0.5 * x[1] * x[1];
        let h = fd_hessian(&f, &[0.3, -0.7], 1e-3, Execution::Sequential);
        assert!((h[(0, 0)] - 4.0).abs() < 1e-6);
        assert!((h[(0, 1)] - 3.0).abs() < 1e-6);
        assert!((h[(1, 1)] - 1.0).abs() < 1e-6);
    }
}
