use crate::error::{Error, Result};
use crate::gmrf::FemMatrices;
use crate::sparse::{CsrMatrix, SymCsc};

/// Clamped B-spline basis on a knot sequence over distances from the conditioning site.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh1D {
    knots: Vec<f64>,
    degree: usize,
    dirichlet_left: bool,
    // knot vector with both ends repeated `degree` extra times
    extended: Vec<f64>,
}

const GAUSS3: [(f64, f64); 3] = [
    (-0.774_596_669_241_483_4, 5.0 / 9.0),
    (0.0, 8.0 / 9.0),
    (0.774_596_669_241_483_4, 5.0 / 9.0),
];

impl Mesh1D {
    pub fn new(knots: Vec<f64>, degree: usize, dirichlet_left: bool) -> Result<Self> {
        if !(1..=2).contains(&degree) {
            return Err(Error::invalid(format!("spline degree {degree} not supported (1 or 2)")));
        }
        if knots.len() < 2 || knots.windows(2).any(|w| !(w[1] > w[0])) || knots.iter().any(|k| !k.is_finite()) {
            return Err(Error::invalid("knots must be finite and strictly increasing, at least two"));
        }
        let mut extended = vec![knots[0]; degree];
        extended.extend_from_slice(&knots);
        extended.extend(std::iter::repeat_n(knots[knots.len() - 1], degree));
        Ok(Self { knots, degree, dirichlet_left, extended })
    }

    /// Knots `0, h, …, max` with `interior` equally spaced interior knots.
    pub fn equispaced(max: f64, interior: usize, degree: usize, dirichlet_left: bool) -> Result<Self> {
        if !(max > 0.0) {
            return Err(Error::invalid(format!("spline domain length {max} must be positive")));
        }
        let cells = interior + 1;
        let knots = (0..=cells).map(|k| max * k as f64 / cells as f64).collect();
        Self::new(knots, degree, dirichlet_left)
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn dirichlet_left(&self) -> bool {
        self.dirichlet_left
    }

    /// Basis size before the boundary constraint.
    pub fn full_size(&self) -> usize {
        self.knots.len() + self.degree - 1
    }

    /// Basis size after the boundary constraint.
    pub fn size(&self) -> usize {
        self.full_size() - usize::from(self.dirichlet_left)
    }

    fn span(&self, x: f64) -> usize {
        let cells = self.knots.len() - 1;
        let k = self.knots.partition_point(|&k| k <= x).clamp(1, cells);
        k - 1 + self.degree
    }

    // nonzero basis values of order `p` at x, for indices span−p ..= span
    fn basis_funs(&self, span: usize, x: f64, p: usize) -> Vec<f64> {
        let t = &self.extended;
        let mut n = vec![0.0; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        n[0] = 1.0;
        for j in 1..=p {
            left[j] = x - t[span + 1 - j];
            right[j] = t[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = n[r] / (right[r + 1] + left[j - r]);
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        n
    }

    fn check_domain(&self, x: f64) -> Result<()> {
        let (lo, hi) = (self.knots[0], self.knots[self.knots.len() - 1]);
        if !(x >= lo && x <= hi) {
            return Err(Error::invalid(format!("distance {x} outside the spline domain [{lo}, {hi}]")));
        }
        Ok(())
    }

    /// Unconstrained basis values at `x` as `(index, value)`.
    pub fn full_basis(&self, x: f64) -> Result<Vec<(usize, f64)>> {
        self.check_domain(x)?;
        let span = self.span(x);
        let vals = self.basis_funs(span, x, self.degree);
        Ok(vals.into_iter().enumerate().map(|(k, v)| (span - self.degree + k, v)).filter(|e| e.1 != 0.0).collect())
    }

    fn full_derivatives(&self, span: usize, x: f64) -> Vec<(usize, f64)> {
        let p = self.degree;
        let t = &self.extended;
        let lower = self.basis_funs(span, x, p - 1);
        let ratio = |i: usize| {
            let d = t[i + p] - t[i];
            if d > 0.0 {
                p as f64 / d
            } else {
                0.0
            }
        };
        (span - p..=span)
            .map(|i| {
                let mut d = 0.0;
                if i + p > span {
                    d += ratio(i) * lower[i + p - 1 - span];
                }
                if i < span {
                    d -= ratio(i + 1) * lower[i + p - span];
                }
                (i, d)
            })
            .collect()
    }

    /// Basis values after the boundary constraint; zero at distance 0 when pinned.
    pub fn basis(&self, x: f64) -> Result<Vec<(usize, f64)>> {
        let full = self.full_basis(x)?;
        if !self.dirichlet_left {
            return Ok(full);
        }
        Ok(full.into_iter().filter(|e| e.0 > 0).map(|(i, v)| (i - 1, v)).collect())
    }

    /// Rows of basis values at each distance.
    pub fn observation_matrix(&self, distances: &[f64]) -> Result<CsrMatrix> {
        let rows = distances.iter().map(|&d| self.basis(d)).collect::<Result<Vec<_>>>()?;
        Ok(CsrMatrix::from_rows(self.size(), rows))
    }

    /// Lumped mass and stiffness of the unconstrained basis.
    pub fn fem(&self) -> FemMatrices {
        let m = self.full_size();
        let mut mass = vec![0.0; m];
        let mut trip = Vec::new();
        for w in self.knots.windows(2) {
            let (a, b) = (w[0], w[1]);
            let half = 0.5 * (b - a);
            let span = self.span(a);
            for &(g, wt) in &GAUSS3 {
                let x = 0.5 * (a + b) + half * g;
                let vals = self.basis_funs(span, x, self.degree);
                for (k, v) in vals.iter().enumerate() {
                    mass[span - self.degree + k] += wt * half * v;
                }
                let ders = self.full_derivatives(span, x);
                for &(i, di) in &ders {
                    for &(j, dj) in &ders {
                        if i >= j {
                            trip.push((i, j, wt * half * di * dj));
                        }
                    }
                }
            }
        }
        FemMatrices { mass, stiffness: SymCsc::from_lower_triplets(m, &trip, false) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_of_unity_and_size() {
        let mesh = Mesh1D::equispaced(300.0, 14, 2, false).unwrap();
        assert_eq!(mesh.knots().len(), 16);
        assert_eq!(mesh.full_size(), 17);
        for k in 0..=60 {
            let x = 5.0 * k as f64;
            let s: f64 = mesh.full_basis(x).unwrap().iter().map(|e| e.1).sum();
            assert!((s - 1.0).abs() < 1e-13);
            assert!(mesh.full_basis(x).unwrap().len() <= 3);
        }
    }

    #[test]
    fn pinned_basis_vanishes_at_zero() {
        let mesh = Mesh1D::equispaced(100.0, 14, 2, true).unwrap();
        assert!(mesh.basis(0.0).unwrap().is_empty());
        assert_eq!(mesh.size(), 16);
        assert!(!mesh.basis(1.0).unwrap().is_empty());
        assert!(mesh.basis(100.5).is_err());
    }

    #[test]
    fn stiffness_annihilates_constants_and_mass_sums_to_length() {
        for degree in [1, 2] {
            let mesh = Mesh1D::equispaced(50.0, 9, degree, false).unwrap();
            let fem = mesh.fem();
            assert!((fem.mass.iter().sum::<f64>() - 50.0).abs() < 1e-10);
            let ones = vec![1.0; mesh.full_size()];
            assert!(fem.stiffness.mul_vec(&ones).iter().all(|v| v.abs() < 1e-12));
            // a linear function x has energy ∫ 1 dx = length
            let greville: Vec<f64> = (0..mesh.full_size())
                .map(|i| (1..=degree).map(|k| mesh.extended[i + k]).sum::<f64>() / degree as f64)
                .collect();
            assert!((fem.stiffness.quad_form(&greville) - 50.0).abs() < 1e-9);
        }
    }
}
