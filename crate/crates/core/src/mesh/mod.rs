//! Spline knots, spatial triangulations, and observation matrices.

mod mesh1d;
mod mesh2d;

pub use mesh1d::Mesh1D;
pub use mesh2d::{Mesh2D, Point};

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Spatial observation rows for `ell` time steps with the conditioning-site
/// row of the first step subtracted from every row.
///
/// Column blocks are ordered by time step; the row for site `i` at step `t`
/// is `A_S(i)` in block `t` minus `A_{s0}` in block 0.
pub fn condition_observation_matrix(a_s: &CsrMatrix, a_s0: &CsrMatrix, ell: usize) -> Result<CsrMatrix> {
    if a_s0.nrows() != 1 {
        return Err(Error::DimensionMismatch(format!("conditioning row matrix has {} rows", a_s0.nrows())));
    }
    if a_s0.ncols() != a_s.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "conditioning row has {} columns, site matrix has {}",
            a_s0.ncols(),
            a_s.ncols()
        )));
    }
    if ell == 0 {
        return Err(Error::invalid("number of time steps must be at least 1"));
    }
    let m = a_s.ncols();
    let base = a_s0.row_entries(0);
    let mut rows = Vec::with_capacity(a_s.nrows() * ell);
    for t in 0..ell {
        for i in 0..a_s.nrows() {
            let mut row: Vec<(usize, f64)> = a_s.row_entries(i).into_iter().map(|(j, v)| (t * m + j, v)).collect();
            row.extend(base.iter().map(|&(j, v)| (j, -v)));
            rows.push(row);
        }
    }
    Ok(CsrMatrix::from_rows(m * ell, rows))
}

/// Block-diagonal repetition `I_n ⊗ A`.
pub fn replicate_observation_matrix(a: &CsrMatrix, n: usize) -> Result<CsrMatrix> {
    if n == 0 {
        return Err(Error::invalid("replicate count must be at least 1"));
    }
    Ok(CsrMatrix::block_diag(&vec![a; n]))
}

/// Euclidean distances from `origin`.
pub fn distances(points: &[Point], origin: Point) -> Vec<f64> {
    points.iter().map(|p| ((p[0] - origin[0]).powi(2) + (p[1] - origin[1]).powi(2)).sqrt()).collect()
}

/// Applies per-axis multipliers and a common scale to coordinates.
pub fn scale_coordinates(points: &[Point], multipliers: [f64; 2], scale: f64) -> Vec<Point> {
    points.iter().map(|p| [p[0] * multipliers[0] * scale, p[1] * multipliers[1] * scale]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spatial_surgery_example() {
        let a = CsrMatrix::identity(2);
        let a0 = CsrMatrix::from_rows(2, vec![a.row_entries(1)]);
        let c = condition_observation_matrix(&a, &a0, 1).unwrap();
        assert_eq!(c.to_dense(), nalgebra::DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 0.0, 0.0]));
    }

    #[test]
    fn space_time_surgery_example() {
        let a = CsrMatrix::identity(2);
        let a0 = CsrMatrix::from_rows(2, vec![a.row_entries(1)]);
        let c = condition_observation_matrix(&a, &a0, 2).unwrap().to_dense();
        let expect = nalgebra::DMatrix::from_row_slice(
            4,
            4,
            &[1.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0, -1.0, 0.0, 1.0],
        );
        assert_eq!(c, expect);
    }

    #[test]
    fn replication_is_block_diagonal() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, 2.0), (1, 1, 3.0)]).unwrap();
        assert_eq!(replicate_observation_matrix(&a, 1).unwrap(), a);
        let r = replicate_observation_matrix(&a, 2).unwrap();
        assert_eq!(r.nnz(), 2 * a.nnz());
        assert_eq!(r.get(2, 3), 2.0);
        assert_eq!(r.get(0, 3), 0.0);
    }

    #[test]
    fn column_mismatch_rejected() {
        let a = CsrMatrix::identity(2);
        let a0 = CsrMatrix::identity(3).select_rows(&[0]);
        assert!(condition_observation_matrix(&a, &a0, 1).is_err());
    }
}
