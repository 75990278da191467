//! Compressed sparse storage used throughout the crate.
//!
//! Observation matrices are row-compressed ([`CsrMatrix`]); symmetric
//! precision matrices keep only their lower triangle, column-compressed
//! ([`SymCsc`]).

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Row-compressed general sparse matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from triplets; duplicates are summed and exact zeros dropped.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nrows];
        for &(r, c, v) in triplets {
            if r >= nrows || c >= ncols {
                return Err(Error::DimensionMismatch(format!(
                    "entry ({r}, {c}) outside a {nrows}x{ncols} matrix"
                )));
            }
            rows[r].push((c, v));
        }
        Ok(Self::from_rows(ncols, rows))
    }

    /// Builds from per-row (column, value) lists; duplicates are summed and exact zeros dropped.
    pub fn from_rows(ncols: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let nrows = rows.len();
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        indptr.push(0);
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            let mut k = 0;
            while k < row.len() {
                let c = row[k].0;
                debug_assert!(c < ncols);
                let mut v = 0.0;
                while k < row.len() && row[k].0 == c {
                    v += row[k].1;
                    k += 1;
                }
                if v != 0.0 {
                    indices.push(c);
                    data.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Self { nrows, ncols, indptr, indices, data }
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, indptr: vec![0; nrows + 1], indices: Vec::new(), data: Vec::new() }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            data: vec![1.0; n],
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let span = self.indptr[i]..self.indptr[i + 1];
        (&self.indices[span.clone()], &self.data[span])
    }

    pub fn row_entries(&self, i: usize) -> Vec<(usize, f64)> {
        let (c, v) = self.row(i);
        c.iter().copied().zip(v.iter().copied()).collect()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (c, v) = self.row(i);
        match c.binary_search(&j) {
            Ok(k) => v[k],
            Err(_) => 0.0,
        }
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows {
            let (c, v) = self.row(i);
            out.extend(c.iter().zip(v).map(|(&j, &x)| (i, j, x)));
        }
        out
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols, "vector length must match column count");
        (0..self.nrows)
            .map(|i| {
                let (c, v) = self.row(i);
                c.iter().zip(v).map(|(&j, &a)| a * x[j]).sum()
            })
            .collect()
    }

    /// Computes `Aᵀ y`.
    pub fn t_mul_vec(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.nrows, "vector length must match row count");
        let mut out = vec![0.0; self.ncols];
        for (i, &yi) in y.iter().enumerate() {
            if yi == 0.0 {
                continue;
            }
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                out[j] += a * yi;
            }
        }
        out
    }

    pub fn scale_rows(&mut self, factors: &[f64]) {
        assert_eq!(factors.len(), self.nrows);
        for i in 0..self.nrows {
            for k in self.indptr[i]..self.indptr[i + 1] {
                self.data[k] *= factors[i];
            }
        }
    }

    /// Keeps only the listed rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self::from_rows(self.ncols, rows.iter().map(|&i| self.row_entries(i)).collect())
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.triplets() {
            m[(i, j)] += v;
        }
        m
    }

    /// Stacks matrices side by side.
    pub fn hstack(blocks: &[&CsrMatrix]) -> Result<Self> {
        let nrows = blocks.first().map_or(0, |b| b.nrows);
        if blocks.iter().any(|b| b.nrows != nrows) {
            return Err(Error::DimensionMismatch("hstack blocks differ in row count".into()));
        }
        let ncols = blocks.iter().map(|b| b.ncols).sum();
        let rows = (0..nrows)
            .map(|i| {
                let mut offset = 0;
                let mut row = Vec::new();
                for b in blocks {
                    row.extend(b.row_entries(i).into_iter().map(|(j, v)| (j + offset, v)));
                    offset += b.ncols;
                }
                row
            })
            .collect();
        Ok(Self::from_rows(ncols, rows))
    }

    /// Stacks matrices vertically.
    pub fn vstack(blocks: &[&CsrMatrix]) -> Result<Self> {
        let ncols = blocks.first().map_or(0, |b| b.ncols);
        if blocks.iter().any(|b| b.ncols != ncols) {
            return Err(Error::DimensionMismatch("vstack blocks differ in column count".into()));
        }
        let rows = blocks.iter().flat_map(|b| (0..b.nrows).map(|i| b.row_entries(i))).collect();
        Ok(Self::from_rows(ncols, rows))
    }

    pub fn block_diag(blocks: &[&CsrMatrix]) -> Self {
        let ncols = blocks.iter().map(|b| b.ncols).sum();
        let mut rows = Vec::new();
        let mut offset = 0;
        for b in blocks {
            for i in 0..b.nrows {
                rows.push(b.row_entries(i).into_iter().map(|(j, v)| (j + offset, v)).collect());
            }
            offset += b.ncols;
        }
        Self::from_rows(ncols, rows)
    }

    /// Lower triangle of `Aᵀ diag(w) A`, keeping structural entries even if they cancel.
    pub fn weighted_gram(&self, weights: &[f64]) -> SymCsc {
        assert_eq!(weights.len(), self.nrows);
        let mut trip = Vec::new();
        for i in 0..self.nrows {
            let (c, v) = self.row(i);
            for a in 0..c.len() {
                for b in 0..c.len() {
                    if c[a] >= c[b] {
                        trip.push((c[a], c[b], weights[i] * v[a] * v[b]));
                    }
                }
            }
        }
        SymCsc::from_lower_triplets(self.ncols, &trip, false)
    }
}

/// Symmetric sparse matrix stored as its lower triangle in compressed-column form.
///
/// Row indices within each column are sorted ascending, so the diagonal, when
/// present, is the first entry of its column.
#[derive(Debug, Clone, PartialEq)]
pub struct SymCsc {
    n: usize,
    colptr: Vec<usize>,
    rowind: Vec<usize>,
    values: Vec<f64>,
}

impl SymCsc {
    /// Builds from triplets on either triangle; `(i, j)` and `(j, i)` refer to
    /// the same entry. Duplicates are summed; exact zeros are dropped only
    /// when `drop_zeros` is set.
    pub fn from_lower_triplets(n: usize, triplets: &[(usize, usize, f64)], drop_zeros: bool) -> Self {
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(r, c, v) in triplets {
            let (r, c) = if r >= c { (r, c) } else { (c, r) };
            assert!(r < n, "entry ({r}, {c}) outside dimension {n}");
            cols[c].push((r, v));
        }
        let mut colptr = Vec::with_capacity(n + 1);
        let mut rowind = Vec::new();
        let mut values = Vec::new();
        colptr.push(0);
        for mut col in cols {
            col.sort_by_key(|e| e.0);
            let mut k = 0;
            while k < col.len() {
                let r = col[k].0;
                let mut v = 0.0;
                while k < col.len() && col[k].0 == r {
                    v += col[k].1;
                    k += 1;
                }
                if !(drop_zeros && v == 0.0) {
                    rowind.push(r);
                    values.push(v);
                }
            }
            colptr.push(rowind.len());
        }
        Self { n, colptr, rowind, values }
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let n = d.len();
        Self { n, colptr: (0..=n).collect(), rowind: (0..n).collect(), values: d.to_vec() }
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let n = m.nrows();
        let mut trip = Vec::new();
        for j in 0..n {
            for i in j..n {
                if m[(i, j)] != 0.0 {
                    trip.push((i, j, m[(i, j)]));
                }
            }
        }
        Self::from_lower_triplets(n, &trip, true)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn colptr(&self) -> &[usize] {
        &self.colptr
    }

    pub fn rowind(&self) -> &[usize] {
        &self.rowind
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Stored entries of the lower triangle.
    pub fn nnz_lower(&self) -> usize {
        self.values.len()
    }

    /// Structural nonzeros of the full symmetric matrix.
    pub fn nnz(&self) -> usize {
        let diag = (0..self.n)
            .filter(|&j| self.colptr[j] < self.colptr[j + 1] && self.rowind[self.colptr[j]] == j)
            .count();
        2 * self.values.len() - diag
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        let span = self.colptr[c]..self.colptr[c + 1];
        match self.rowind[span.clone()].binary_search(&r) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.get(j, j)).collect()
    }

    /// Lower-triangle triplets `(row, col, value)` with `row >= col`.
    pub fn lower_triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.values.len());
        for j in 0..self.n {
            for k in self.colptr[j]..self.colptr[j + 1] {
                out.push((self.rowind[k], j, self.values[k]));
            }
        }
        out
    }

    /// Every structural entry of the full matrix, both triangles.
    pub fn full_triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(2 * self.values.len());
        for (i, j, v) in self.lower_triplets() {
            out.push((i, j, v));
            if i != j {
                out.push((j, i, v));
            }
        }
        out
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        let mut y = vec![0.0; self.n];
        for j in 0..self.n {
            for k in self.colptr[j]..self.colptr[j + 1] {
                let i = self.rowind[k];
                let v = self.values[k];
                y[i] += v * x[j];
                if i != j {
                    y[j] += v * x[i];
                }
            }
        }
        y
    }

    /// `xᵀ Q x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        self.mul_vec(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    pub fn scale(&mut self, s: f64) {
        self.values.iter_mut().for_each(|v| *v *= s);
    }

    pub fn same_pattern(&self, other: &SymCsc) -> bool {
        self.n == other.n && self.colptr == other.colptr && self.rowind == other.rowind
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for (i, j, v) in self.full_triplets() {
            m[(i, j)] = v;
        }
        m
    }

    /// Sum of two symmetric matrices; the union pattern is kept, zeros included.
    pub fn add(&self, other: &SymCsc) -> Result<SymCsc> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch(format!("{} vs {}", self.n, other.n)));
        }
        let mut trip = self.lower_triplets();
        trip.extend(other.lower_triplets());
        Ok(SymCsc::from_lower_triplets(self.n, &trip, false))
    }

    /// Standard Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &SymCsc) -> SymCsc {
        let nb = other.n;
        let a = self.full_triplets();
        let b = other.full_triplets();
        let mut trip = Vec::with_capacity(a.len() * b.len() / 2 + nb);
        for &(ia, ja, va) in &a {
            for &(ib, jb, vb) in &b {
                let r = ia * nb + ib;
                let c = ja * nb + jb;
                if r >= c {
                    trip.push((r, c, va * vb));
                }
            }
        }
        SymCsc::from_lower_triplets(self.n * nb, &trip, false)
    }

    pub fn block_diag(blocks: &[&SymCsc]) -> SymCsc {
        let n = blocks.iter().map(|b| b.n).sum();
        let mut trip = Vec::new();
        let mut offset = 0;
        for b in blocks {
            trip.extend(b.lower_triplets().into_iter().map(|(i, j, v)| (i + offset, j + offset, v)));
            offset += b.n;
        }
        SymCsc::from_lower_triplets(n, &trip, false)
    }

    /// Block-diagonal matrix of scaled blocks, built without re-sorting.
    pub fn block_diag_scaled(blocks: &[(&SymCsc, f64)]) -> SymCsc {
        let n = blocks.iter().map(|b| b.0.n).sum();
        let nnz = blocks.iter().map(|b| b.0.values.len()).sum();
        let mut colptr = Vec::with_capacity(n + 1);
        let mut rowind = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        colptr.push(0);
        let mut offset = 0;
        for &(b, s) in blocks {
            for j in 0..b.n {
                for k in b.colptr[j]..b.colptr[j + 1] {
                    rowind.push(b.rowind[k] + offset);
                    values.push(b.values[k] * s);
                }
                colptr.push(rowind.len());
            }
            offset += b.n;
        }
        SymCsc { n, colptr, rowind, values }
    }

    /// Removes the listed rows and columns (indices need not be sorted).
    pub fn remove_indices(&self, drop: &[usize]) -> SymCsc {
        let mut keep = vec![true; self.n];
        for &d in drop {
            keep[d] = false;
        }
        let mut new_index = vec![usize::MAX; self.n];
        let mut next = 0;
        for i in 0..self.n {
            if keep[i] {
                new_index[i] = next;
                next += 1;
            }
        }
        let trip: Vec<_> = self
            .lower_triplets()
            .into_iter()
            .filter(|&(i, j, _)| keep[i] && keep[j])
            .map(|(i, j, v)| (new_index[i], new_index[j], v))
            .collect();
        SymCsc::from_lower_triplets(next, &trip, false)
    }
}

/// A fixed sparsity pattern with a precomputed scatter map, so that matrices
/// sharing the pattern can be assembled from term values without sorting.
#[derive(Debug, Clone)]
pub struct PatternAssembler {
    template: SymCsc,
    slots: Vec<usize>,
}

impl PatternAssembler {
    /// `entries` lists `(row, col)` positions (either triangle); the i-th value
    /// passed to [`assemble`](Self::assemble) is added at the i-th position.
    pub fn new(n: usize, entries: &[(usize, usize)]) -> Self {
        let trip: Vec<_> = entries.iter().map(|&(i, j)| (i, j, 0.0)).collect();
        let template = SymCsc::from_lower_triplets(n, &trip, false);
        let slots = entries
            .iter()
            .map(|&(i, j)| {
                let (r, c) = if i >= j { (i, j) } else { (j, i) };
                let span = template.colptr[c]..template.colptr[c + 1];
                span.start + template.rowind[span].binary_search(&r).expect("entry present in template")
            })
            .collect();
        Self { template, slots }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn assemble(&self, values: &[f64]) -> SymCsc {
        assert_eq!(values.len(), self.slots.len());
        let mut out = self.template.clone();
        for (&s, &v) in self.slots.iter().zip(values) {
            out.values[s] += v;
        }
        out
    }
}
