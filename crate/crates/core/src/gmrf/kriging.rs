//! Conditioning Gaussian vectors on linear constraints `B w = e`.

use nalgebra::{DMatrix, DVector};

use super::cholesky::CholeskyFactor;
use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Precomputed `V = Q⁻¹Bᵀ` and a factor of `B Q⁻¹ Bᵀ` for one precision.
#[derive(Debug, Clone)]
pub struct KrigingCorrection {
    b: CsrMatrix,
    v: DMatrix<f64>,
    gram: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    gram_log_det: f64,
}

impl KrigingCorrection {
    pub fn new(f: &CholeskyFactor, b: &CsrMatrix) -> Result<Self> {
        let (k, m) = (b.nrows(), b.ncols());
        if m != f.dim() {
            return Err(Error::DimensionMismatch(format!("constraint has {m} columns, precision has {}", f.dim())));
        }
        let mut v = DMatrix::zeros(m, k);
        let mut row = vec![0.0; m];
        for r in 0..k {
            row.iter_mut().for_each(|x| *x = 0.0);
            for (j, x) in b.row_entries(r) {
                row[j] = x;
            }
            let col = f.solve(&row);
            v.column_mut(r).copy_from_slice(&col);
        }
        let mut gram = DMatrix::zeros(k, k);
        for r in 0..k {
            for c in 0..k {
                let (idx, val) = b.row(r);
                gram[(r, c)] = idx.iter().zip(val).map(|(&j, &x)| x * v[(j, c)]).sum();
            }
        }
        gram = (&gram + gram.transpose()) * 0.5;
        let eig = gram.clone().symmetric_eigen().eigenvalues;
        let max = eig.iter().cloned().fold(0.0, f64::max);
        let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
        if k > 0 && !(min > 1e-12 * max) {
            return Err(Error::SingularConstraint);
        }
        let chol = nalgebra::Cholesky::new(gram).ok_or(Error::SingularConstraint)?;
        let gram_log_det = 2.0 * chol.l().diagonal().iter().map(|x| x.ln()).sum::<f64>();
        Ok(Self { b: b.clone(), v, gram: chol, gram_log_det })
    }

    pub fn constraint(&self) -> &CsrMatrix {
        &self.b
    }

    /// `w − V (B V)⁻¹ (B w − e)`.
    pub fn apply(&self, w: &[f64], e: &[f64]) -> Vec<f64> {
        let resid = DVector::from_iterator(e.len(), self.b.mul_vec(w).iter().zip(e).map(|(a, b)| a - b));
        let coef = self.gram.solve(&resid);
        let shift = &self.v * coef;
        let mut out: Vec<f64> = w.iter().zip(shift.iter()).map(|(a, s)| a - s).collect();
        // single-coordinate constraints are imposed exactly rather than up to rounding
        for (r, &target) in e.iter().enumerate() {
            let (idx, val) = self.b.row(r);
            if idx.len() == 1 {
                out[idx[0]] = target / val[0];
            }
        }
        out
    }

    /// Variance removed from `aᵀ w` by the constraint, for sparse `a`.
    pub fn variance_reduction(&self, idx: &[usize], vals: &[f64]) -> f64 {
        let k = self.v.ncols();
        let u = DVector::from_iterator(k, (0..k).map(|c| idx.iter().zip(vals).map(|(&j, &x)| x * self.v[(j, c)]).sum()));
        u.dot(&self.gram.solve(&u))
    }

    /// `log N(e; B μ, B Q⁻¹ Bᵀ)`.
    pub fn log_density(&self, mean: &[f64], e: &[f64]) -> f64 {
        let k = e.len();
        let r = DVector::from_iterator(k, e.iter().zip(self.b.mul_vec(mean)).map(|(a, b)| a - b));
        let quad = r.dot(&self.gram.solve(&r));
        -0.5 * (k as f64) * (2.0 * std::f64::consts::PI).ln() - 0.5 * self.gram_log_det - 0.5 * quad
    }

    /// Dense `Q⁻¹Bᵀ (B Q⁻¹ Bᵀ)⁻¹ B Q⁻¹`, for small problems and tests.
    pub fn covariance_reduction(&self) -> DMatrix<f64> {
        let solved = self.gram.solve(&self.v.transpose());
        &self.v * solved
    }
}

/// Applies the kriging transform to one vector.
pub fn condition_by_kriging(w: &[f64], f: &CholeskyFactor, b: &CsrMatrix, e: &[f64]) -> Result<Vec<f64>> {
    if b.nrows() != e.len() {
        return Err(Error::DimensionMismatch("constraint rows and targets differ".into()));
    }
    Ok(KrigingCorrection::new(f, b)?.apply(w, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmrf::{ar1_precision, factorize};

    #[test]
    fn first_component_pinned() {
        let q = ar1_precision(5, 0.6).unwrap();
        let f = factorize(&q).unwrap();
        let b = CsrMatrix::from_triplets(1, 5, &[(0, 0, 1.0)]).unwrap();
        let w = [0.7, 0.1, -0.3, 1.2, 0.4];
        let c = condition_by_kriging(&w, &f, &b, &[0.0]).unwrap();
        assert_eq!(c[0], 0.0);
        let same = condition_by_kriging(&c, &f, &b, &[0.0]).unwrap();
        assert_eq!(same, c);
    }

    #[test]
    fn duplicate_rows_are_rejected() {
        let q = ar1_precision(3, 0.2).unwrap();
        let f = factorize(&q).unwrap();
        let b = CsrMatrix::from_triplets(2, 3, &[(0, 1, 1.0), (1, 1, 1.0)]).unwrap();
        assert!(matches!(KrigingCorrection::new(&f, &b), Err(Error::SingularConstraint)));
    }
}
