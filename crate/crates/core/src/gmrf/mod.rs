//! Gaussian Markov random fields: precision construction, factorization,
//! sampling and linear-constraint conditioning.

pub mod cholesky;
pub mod kriging;
pub mod ordering;

use std::io::{Read, Write};

use statrs::function::gamma::gamma;

pub use cholesky::{factorize, factorize_with, CholeskyFactor, FactorCache, SelectedInverse, Symbolic};
pub use kriging::{condition_by_kriging, KrigingCorrection};
pub use ordering::Ordering;

use crate::error::{Error, Result};
use crate::sparse::{PatternAssembler, SymCsc};

/// Symmetric precision matrix, lower triangle stored.
pub type SparsePrecision = SymCsc;

/// Spatial dimension of an SPDE domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    One,
    Two,
}

impl Dimension {
    pub fn value(self) -> f64 {
        match self {
            Dimension::One => 1.0,
            Dimension::Two => 2.0,
        }
    }
}

/// Parameters of the SPDE `(κ² − Δ)^{ζ/2} τ W = white noise`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpdeParams {
    pub kappa: f64,
    pub tau: f64,
    /// Smoothness `ν`; the SPDE exponent is `ζ = ν + D/2`.
    pub nu: f64,
    pub dim: Dimension,
}

impl SpdeParams {
    pub fn zeta(&self) -> f64 {
        self.nu + self.dim.value() / 2.0
    }
}

fn variance_factor(nu: f64, dim: Dimension) -> f64 {
    let d = dim.value();
    gamma(nu) / (gamma(nu + d / 2.0) * (4.0 * std::f64::consts::PI).powf(d / 2.0))
}

/// Maps a Matérn range (distance at which correlation is near 0.1) and
/// standard deviation to SPDE parameters.
pub fn matern_to_spde(range: f64, sd: f64, nu: f64, dim: Dimension) -> Result<SpdeParams> {
    if !(range > 0.0 && sd > 0.0 && nu > 0.0) {
        return Err(Error::invalid(format!("range {range}, sd {sd} and nu {nu} must be positive")));
    }
    let kappa = (8.0 * nu).sqrt() / range;
    let tau = (variance_factor(nu, dim) / (kappa.powf(2.0 * nu) * sd * sd)).sqrt();
    Ok(SpdeParams { kappa, tau, nu, dim })
}

/// Inverse of [`matern_to_spde`]: returns `(range, sd)`.
pub fn spde_to_matern(p: &SpdeParams) -> (f64, f64) {
    let range = (8.0 * p.nu).sqrt() / p.kappa;
    let sd = (variance_factor(p.nu, p.dim) / (p.kappa.powf(2.0 * p.nu) * p.tau * p.tau)).sqrt();
    (range, sd)
}

/// Finite-element matrices of a mesh: lumped (diagonal) mass and stiffness.
#[derive(Debug, Clone)]
pub struct FemMatrices {
    pub mass: Vec<f64>,
    pub stiffness: SymCsc,
}

impl FemMatrices {
    /// `G C⁻¹ G` for the lumped mass `C`.
    pub fn second_order(&self) -> SymCsc {
        let n = self.mass.len();
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (i, j, v) in self.stiffness.full_triplets() {
            cols[j].push((i, v));
        }
        let mut trip = Vec::new();
        for (k, col) in cols.iter().enumerate() {
            let dk = 1.0 / self.mass[k];
            for &(i, gi) in col {
                for &(j, gj) in col {
                    if i >= j {
                        trip.push((i, j, gi * gj * dk));
                    }
                }
            }
        }
        SymCsc::from_lower_triplets(n, &trip, false)
    }
}

// Two-root rational approximation of y^{3/2} on y >= 1 used for ζ = 3/2 in 2D:
// p(y) = c (y − r1)(y − r2), with r1 = 1 − a², r2 = 1 − (4a)², and c fixed so
// the marginal variance equals the Matérn value. The implied correlation is
// (K0(a κ h) − K0(4 a κ h)) / ln 4, which stays within 0.052 of exp(−κ h).
const HALF_INTEGER_ROOT_SCALE: f64 = 0.936_979_2;
const HALF_INTEGER_ROOT_RATIO: f64 = 4.0;

fn half_integer_roots() -> (f64, f64, f64) {
    let a1 = HALF_INTEGER_ROOT_SCALE;
    let a2 = HALF_INTEGER_ROOT_RATIO * a1;
    let r1 = 1.0 - a1 * a1;
    let r2 = 1.0 - a2 * a2;
    let c = HALF_INTEGER_ROOT_RATIO.ln() / (r1 - r2);
    (r1, r2, c)
}

/// SPDE precision builder with a fixed sparsity pattern for all `(κ, τ)`.
#[derive(Debug, Clone)]
pub struct SpdeOperator {
    dim: Dimension,
    nu: f64,
    n: usize,
    assembler: PatternAssembler,
    mass: Vec<f64>,
    stiffness: Vec<f64>,
    second: Vec<f64>,
}

impl SpdeOperator {
    /// Supported: ν = 1/2 or 3/2 in 1D (ζ = 1, 2); ν = 1/2 or 1 in 2D (ζ = 3/2, 2).
    pub fn new(fem: &FemMatrices, nu: f64, dim: Dimension) -> Result<Self> {
        let zeta = nu + dim.value() / 2.0;
        let supported = match dim {
            Dimension::One => zeta == 1.0 || zeta == 2.0,
            Dimension::Two => zeta == 1.5 || zeta == 2.0,
        };
        if !supported {
            return Err(Error::invalid(format!("unsupported SPDE exponent {zeta} in dimension {dim:?}")));
        }
        let n = fem.mass.len();
        let g = fem.stiffness.lower_triplets();
        let h = if zeta > 1.0 { fem.second_order().lower_triplets() } else { Vec::new() };
        let mut entries: Vec<(usize, usize)> = (0..n).map(|i| (i, i)).collect();
        entries.extend(g.iter().map(|&(i, j, _)| (i, j)));
        entries.extend(h.iter().map(|&(i, j, _)| (i, j)));
        Ok(Self {
            dim,
            nu,
            n,
            assembler: PatternAssembler::new(n, &entries),
            mass: fem.mass.clone(),
            stiffness: g.iter().map(|e| e.2).collect(),
            second: h.iter().map(|e| e.2).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Coefficients of (mass, stiffness, second-order) terms, without `τ²`.
    fn coefficients(&self, kappa: f64) -> (f64, f64, f64) {
        let k2 = kappa * kappa;
        let zeta = self.nu + self.dim.value() / 2.0;
        if zeta == 1.0 {
            (k2, 1.0, 0.0)
        } else if zeta == 2.0 {
            (k2 * k2, 2.0 * k2, 1.0)
        } else {
            let (r1, r2, c) = half_integer_roots();
            let s = c * kappa * k2;
            (s * (1.0 - (r1 + r2) + r1 * r2), s * (2.0 - (r1 + r2)) / k2, s / (k2 * k2))
        }
    }

    pub fn precision(&self, params: &SpdeParams) -> SymCsc {
        let (c0, c1, c2) = self.coefficients(params.kappa);
        let t2 = params.tau * params.tau;
        let mut values = Vec::with_capacity(self.assembler.len());
        values.extend(self.mass.iter().map(|m| t2 * c0 * m));
        values.extend(self.stiffness.iter().map(|g| t2 * c1 * g));
        values.extend(self.second.iter().map(|h| t2 * c2 * h));
        self.assembler.assemble(&values)
    }

    /// Precision for a Matérn range and standard deviation.
    pub fn precision_for(&self, range: f64, sd: f64) -> Result<SymCsc> {
        let p = matern_to_spde(range, sd, self.nu, self.dim)?;
        Ok(self.precision(&p))
    }
}

/// SPDE precision for the given finite-element matrices.
pub fn spde_precision(fem: &FemMatrices, params: &SpdeParams) -> Result<SparsePrecision> {
    let q = SpdeOperator::new(fem, params.nu, params.dim)?.precision(params);
    let trip = q.lower_triplets();
    Ok(SymCsc::from_lower_triplets(q.dim(), &trip, true))
}

/// Precision of a stationary unit-variance AR(1) sequence of length `len`.
pub fn ar1_precision(len: usize, rho: f64) -> Result<SparsePrecision> {
    if len == 0 {
        return Err(Error::invalid("AR(1) length must be at least 1"));
    }
    if !(rho.abs() < 1.0) {
        return Err(Error::invalid(format!("AR(1) coefficient {rho} must lie in (-1, 1)")));
    }
    Ok(ar1_precision_pattern(len, rho, true))
}

/// AR(1) precision; with `drop_zeros` false the tridiagonal pattern is kept at `ρ = 0`.
pub(crate) fn ar1_precision_pattern(len: usize, rho: f64, drop_zeros: bool) -> SymCsc {
    let s = 1.0 / (1.0 - rho * rho);
    let mut trip = Vec::with_capacity(2 * len);
    for i in 0..len {
        let interior = i > 0 && i + 1 < len;
        trip.push((i, i, s * if interior { 1.0 + rho * rho } else { 1.0 }));
        if i > 0 {
            trip.push((i, i - 1, -rho * s));
        }
    }
    if len == 1 {
        trip[0].2 = 1.0;
    }
    SymCsc::from_lower_triplets(len, &trip, drop_zeros)
}

/// Log-determinant of [`ar1_precision`].
pub fn ar1_log_det(len: usize, rho: f64) -> f64 {
    -((len as f64) - 1.0) * (1.0 - rho * rho).ln()
}

/// Kronecker product `a ⊗ b` of two precisions.
pub fn kronecker(a: &SparsePrecision, b: &SparsePrecision) -> SparsePrecision {
    a.kron(b)
}

/// Writes the lower triangle as `row,col,value` lines with a header.
pub fn write_triplets<W: Write>(q: &SparsePrecision, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["row", "col", "value"])?;
    for (i, j, v) in q.lower_triplets() {
        w.write_record([i.to_string(), j.to_string(), format!("{v:e}")])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a precision from `row,col,value` triplets; the dimension is `1 + max index`
/// unless `dim` is given.
pub fn read_triplets<R: Read>(input: R, dim: Option<usize>) -> Result<SparsePrecision> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut trip = Vec::new();
    let mut max = 0;
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = k + 2;
        let parse_err = |what: &str| Error::Parse { line, message: format!("invalid {what}") };
        let i: usize = rec.get(0).and_then(|s| s.trim().parse().ok()).ok_or_else(|| parse_err("row"))?;
        let j: usize = rec.get(1).and_then(|s| s.trim().parse().ok()).ok_or_else(|| parse_err("col"))?;
        let v: f64 = rec.get(2).and_then(|s| s.trim().parse().ok()).ok_or_else(|| parse_err("value"))?;
        max = max.max(i).max(j);
        trip.push((i, j, v));
    }
    let n = dim.unwrap_or(if trip.is_empty() { 0 } else { max + 1 });
    if !trip.is_empty() && max >= n {
        return Err(Error::DimensionMismatch(format!("index {max} exceeds dimension {n}")));
    }
    Ok(SymCsc::from_lower_triplets(n, &trip, true))
}
