//! Up-looking sparse Cholesky factorization with symbolic reuse.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use super::ordering::{self, Ordering};
use crate::error::{Error, Result};
use crate::sparse::SymCsc;

const NONE: usize = usize::MAX;

/// Ordering, elimination tree and factor layout for one sparsity pattern.
#[derive(Debug)]
pub struct Symbolic {
    n: usize,
    perm: Vec<usize>,
    pinv: Vec<usize>,
    parent: Vec<usize>,
    lp: Vec<usize>,
    // permuted matrix, upper triangle, compressed by column
    cp: Vec<usize>,
    ci: Vec<usize>,
    // position in the permuted matrix of each stored input entry
    cmap: Vec<usize>,
    src_colptr: Vec<usize>,
    src_rowind: Vec<usize>,
}

impl Symbolic {
    pub fn analyze(a: &SymCsc, ordering: Ordering) -> Arc<Self> {
        let n = a.dim();
        let perm = ordering::compute(a, ordering);
        let mut pinv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            pinv[old] = new;
        }

        let (colptr, rowind) = (a.colptr(), a.rowind());
        let nnz = rowind.len();
        let mut counts = vec![0usize; n];
        let mut place = Vec::with_capacity(nnz);
        for j in 0..n {
            for &i in &rowind[colptr[j]..colptr[j + 1]] {
                let (pi, pj) = (pinv[i], pinv[j]);
                let (r, c) = if pi <= pj { (pi, pj) } else { (pj, pi) };
                counts[c] += 1;
                place.push((r, c));
            }
        }
        let mut cp = vec![0; n + 1];
        for j in 0..n {
            cp[j + 1] = cp[j] + counts[j];
        }
        let mut next = cp[..n].to_vec();
        let mut ci = vec![0; nnz];
        let mut cmap = vec![0; nnz];
        for (k, &(r, c)) in place.iter().enumerate() {
            ci[next[c]] = r;
            cmap[k] = next[c];
            next[c] += 1;
        }

        let parent = etree(n, &cp, &ci);
        let mut colcount = vec![1usize; n];
        let mut stack = vec![0; n];
        let mut mark = vec![NONE; n];
        for k in 0..n {
            let top = ereach(k, &cp, &ci, &parent, &mut stack, &mut mark);
            for &i in &stack[top..] {
                colcount[i] += 1;
            }
        }
        let mut lp = vec![0; n + 1];
        for j in 0..n {
            lp[j + 1] = lp[j] + colcount[j];
        }

        Arc::new(Self {
            n,
            perm,
            pinv,
            parent,
            lp,
            cp,
            ci,
            cmap,
            src_colptr: colptr.to_vec(),
            src_rowind: rowind.to_vec(),
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Nonzeros of the factor, diagonal included.
    pub fn factor_nnz(&self) -> usize {
        self.lp[self.n]
    }

    /// True if `a` has exactly the pattern this analysis was computed for.
    pub fn matches(&self, a: &SymCsc) -> bool {
        a.dim() == self.n && a.colptr() == self.src_colptr.as_slice() && a.rowind() == self.src_rowind.as_slice()
    }

    /// Numeric factorization of a matrix sharing the analyzed pattern.
    pub fn factor(self: &Arc<Self>, a: &SymCsc) -> Result<CholeskyFactor> {
        if !self.matches(a) {
            return Err(Error::DimensionMismatch("matrix pattern differs from symbolic analysis".into()));
        }
        let n = self.n;
        let mut cx = vec![0.0; self.ci.len()];
        for (k, &v) in a.values().iter().enumerate() {
            cx[self.cmap[k]] = v;
        }
        let lnz = self.lp[n];
        let mut li = vec![0usize; lnz];
        let mut lx = vec![0.0; lnz];
        let mut fill = self.lp[..n].to_vec();
        let mut x = vec![0.0; n];
        let mut stack = vec![0; n];
        let mut mark = vec![NONE; n];

        for k in 0..n {
            let top = ereach(k, &self.cp, &self.ci, &self.parent, &mut stack, &mut mark);
            for p in self.cp[k]..self.cp[k + 1] {
                x[self.ci[p]] = cx[p];
            }
            let mut d = x[k];
            x[k] = 0.0;
            for &i in &stack[top..] {
                let lki = x[i] / lx[self.lp[i]];
                x[i] = 0.0;
                for q in self.lp[i] + 1..fill[i] {
                    x[li[q]] -= lx[q] * lki;
                }
                d -= lki * lki;
                let q = fill[i];
                fill[i] += 1;
                li[q] = k;
                lx[q] = lki;
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: self.perm[k] });
            }
            let q = fill[k];
            fill[k] += 1;
            li[q] = k;
            lx[q] = d.sqrt();
        }
        Ok(CholeskyFactor { symbolic: Arc::clone(self), li, lx })
    }
}

fn etree(n: usize, cp: &[usize], ci: &[usize]) -> Vec<usize> {
    let mut parent = vec![NONE; n];
    let mut ancestor = vec![NONE; n];
    for k in 0..n {
        for &row in &ci[cp[k]..cp[k + 1]] {
            let mut i = row;
            while i != NONE && i < k {
                let inext = ancestor[i];
                ancestor[i] = k;
                if inext == NONE {
                    parent[i] = k;
                }
                i = inext;
            }
        }
    }
    parent
}

/// Pattern of row `k` of the factor, written to `stack[top..]` in topological order.
fn ereach(k: usize, cp: &[usize], ci: &[usize], parent: &[usize], stack: &mut [usize], mark: &mut [usize]) -> usize {
    let n = parent.len();
    let mut top = n;
    mark[k] = k;
    for &row in &ci[cp[k]..cp[k + 1]] {
        let mut i = row;
        if i > k {
            continue;
        }
        let mut len = 0;
        while i != NONE && mark[i] != k {
            stack[len] = i;
            len += 1;
            mark[i] = k;
            i = parent[i];
        }
        while len > 0 {
            top -= 1;
            len -= 1;
            stack[top] = stack[len];
        }
    }
    top
}

/// Numeric factor `P Q Pᵀ = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    symbolic: Arc<Symbolic>,
    li: Vec<usize>,
    lx: Vec<f64>,
}

impl CholeskyFactor {
    pub fn dim(&self) -> usize {
        self.symbolic.n
    }

    pub fn symbolic(&self) -> &Arc<Symbolic> {
        &self.symbolic
    }

    /// `perm[new] = old`.
    pub fn permutation(&self) -> &[usize] {
        &self.symbolic.perm
    }

    /// Factor in compressed-column form: `(colptr, rowind, values)`, diagonal first in each column.
    pub fn lower(&self) -> (&[usize], &[usize], &[f64]) {
        (&self.symbolic.lp, &self.li, &self.lx)
    }

    pub fn log_det(&self) -> f64 {
        let lp = &self.symbolic.lp;
        2.0 * (0..self.dim()).map(|j| self.lx[lp[j]].ln()).sum::<f64>()
    }

    fn l_solve(&self, x: &mut [f64]) {
        let lp = &self.symbolic.lp;
        for j in 0..self.dim() {
            x[j] /= self.lx[lp[j]];
            let xj = x[j];
            for p in lp[j] + 1..lp[j + 1] {
                x[self.li[p]] -= self.lx[p] * xj;
            }
        }
    }

    fn lt_solve(&self, x: &mut [f64]) {
        let lp = &self.symbolic.lp;
        for j in (0..self.dim()).rev() {
            let mut s = x[j];
            for p in lp[j] + 1..lp[j + 1] {
                s -= self.lx[p] * x[self.li[p]];
            }
            x[j] = s / self.lx[lp[j]];
        }
    }

    /// Solves `Q x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.dim());
        let pinv = &self.symbolic.pinv;
        let mut y = vec![0.0; b.len()];
        for (i, &bi) in b.iter().enumerate() {
            y[pinv[i]] = bi;
        }
        self.l_solve(&mut y);
        self.lt_solve(&mut y);
        (0..b.len()).map(|i| y[pinv[i]]).collect()
    }

    /// Maps standard normals `z` to a draw with precision `Q`: `Pᵀ L⁻ᵀ z`.
    pub fn correlate(&self, z: &[f64]) -> Vec<f64> {
        assert_eq!(z.len(), self.dim());
        let mut u = z.to_vec();
        self.lt_solve(&mut u);
        let pinv = &self.symbolic.pinv;
        (0..z.len()).map(|i| u[pinv[i]]).collect()
    }

    /// One zero-mean draw with precision `Q`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z: Vec<f64> = (0..self.dim()).map(|_| rng.sample(StandardNormal)).collect();
        self.correlate(&z)
    }

    /// `log N(w; 0, Q⁻¹)`, with `Q` the factored matrix.
    pub fn log_density(&self, q: &SymCsc, w: &[f64]) -> f64 {
        let m = w.len() as f64;
        0.5 * self.log_det() - 0.5 * m * (2.0 * std::f64::consts::PI).ln() - 0.5 * q.quad_form(w)
    }

    /// Entries of `Q⁻¹` on the pattern of the factor.
    pub fn selected_inverse(&self) -> SelectedInverse {
        let n = self.dim();
        let lp = &self.symbolic.lp;
        let mut sigma = vec![0.0; self.lx.len()];
        let lookup = |sigma: &[f64], r: usize, c: usize| -> f64 {
            let (r, c) = if r >= c { (r, c) } else { (c, r) };
            let span = lp[c]..lp[c + 1];
            match self.li[span.clone()].binary_search(&r) {
                Ok(k) => sigma[span.start + k],
                Err(_) => unreachable!("selected inverse entry outside factor pattern"),
            }
        };
        for i in (0..n).rev() {
            let diag = self.lx[lp[i]];
            let below = lp[i] + 1..lp[i + 1];
            for p in below.clone().rev() {
                let j = self.li[p];
                let mut s = 0.0;
                for q in below.clone() {
                    s += self.lx[q] * lookup(&sigma, self.li[q], j);
                }
                sigma[p] = -s / diag;
            }
            let mut s = 0.0;
            for q in below {
                s += self.lx[q] * sigma[q];
            }
            sigma[lp[i]] = 1.0 / (diag * diag) - s / diag;
        }
        SelectedInverse { symbolic: Arc::clone(&self.symbolic), li: self.li.clone(), sigma }
    }
}

/// Entries of a covariance matrix `Q⁻¹` restricted to the Cholesky pattern.
#[derive(Debug, Clone)]
pub struct SelectedInverse {
    symbolic: Arc<Symbolic>,
    li: Vec<usize>,
    sigma: Vec<f64>,
}

impl SelectedInverse {
    /// Covariance entry for original indices `i`, `j`, if it lies on the factor pattern.
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let (a, b) = (self.symbolic.pinv[i], self.symbolic.pinv[j]);
        let (r, c) = if a >= b { (a, b) } else { (b, a) };
        let lp = &self.symbolic.lp;
        let span = lp[c]..lp[c + 1];
        self.li[span.clone()].binary_search(&r).ok().map(|k| self.sigma[span.start + k])
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.symbolic.n).map(|i| self.get(i, i).expect("diagonal always present")).collect()
    }

    /// `aᵀ Q⁻¹ a` for a sparse vector whose pairwise entries lie on the pattern.
    pub fn quad_form(&self, idx: &[usize], vals: &[f64]) -> Option<f64> {
        let mut s = 0.0;
        for (a, (&i, &vi)) in idx.iter().zip(vals).enumerate() {
            s += vi * vi * self.get(i, i)?;
            for (&j, &vj) in idx[..a].iter().zip(vals) {
                s += 2.0 * vi * vj * self.get(i, j)?;
            }
        }
        Some(s)
    }
}

/// Factorizes `q` with a fresh minimum-degree analysis.
pub fn factorize(q: &SymCsc) -> Result<CholeskyFactor> {
    Symbolic::analyze(q, Ordering::MinimumDegree).factor(q)
}

/// Factorizes `q` with the chosen ordering.
pub fn factorize_with(q: &SymCsc, ordering: Ordering) -> Result<CholeskyFactor> {
    Symbolic::analyze(q, ordering).factor(q)
}

/// Holds one symbolic analysis and reuses it whenever the pattern repeats.
#[derive(Debug, Default)]
pub struct FactorCache {
    symbolic: std::sync::Mutex<Option<Arc<Symbolic>>>,
}

impl FactorCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn factorize(&self, q: &SymCsc) -> Result<CholeskyFactor> {
        let existing = {
            let guard = self.symbolic.lock().expect("factor cache poisoned");
            guard.as_ref().filter(|s| s.matches(q)).cloned()
        };
        let symbolic = match existing {
            Some(s) => s,
            None => {
                let s = Symbolic::analyze(q, Ordering::MinimumDegree);
                *self.symbolic.lock().expect("factor cache poisoned") = Some(Arc::clone(&s));
                s
            }
        };
        symbolic.factor(q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, density: f64, seed: u64) -> SymCsc {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut trip = Vec::new();
        let mut rowsum = vec![0.0; n];
        for j in 0..n {
            for i in j + 1..n {
                if rng.random::<f64>() < density {
                    let v: f64 = rng.random_range(-1.0..1.0);
                    trip.push((i, j, v));
                    rowsum[i] += v.abs();
                    rowsum[j] += v.abs();
                }
            }
        }
        for i in 0..n {
            trip.push((i, i, rowsum[i] + 0.5 + rng.random::<f64>()));
        }
        SymCsc::from_lower_triplets(n, &trip, true)
    }

    fn reconstruct(f: &CholeskyFactor) -> DMatrix<f64> {
        let n = f.dim();
        let (lp, li, lx) = f.lower();
        let mut l = DMatrix::zeros(n, n);
        for j in 0..n {
            for p in lp[j]..lp[j + 1] {
                l[(li[p], j)] = lx[p];
            }
        }
        let llt = &l * l.transpose();
        let perm = f.permutation();
        DMatrix::from_fn(n, n, |i, j| {
            let pi = perm.iter().position(|&o| o == i).unwrap();
            let pj = perm.iter().position(|&o| o == j).unwrap();
            llt[(pi, pj)]
        })
    }

    #[test]
    fn identity_factor_is_identity() {
        let q = SymCsc::identity(5);
        let f = factorize(&q).unwrap();
        assert_eq!(f.log_det(), 0.0);
        assert_eq!(f.solve(&[1.0, 2.0, 3.0, 4.0, 5.0]), vec![1.0, 2.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn reconstruction_and_logdet_match_dense() {
        for seed in 0..10 {
            for ordering in [Ordering::Natural, Ordering::MinimumDegree] {
                let q = random_spd(12, 0.3, seed);
                let f = factorize_with(&q, ordering).unwrap();
                let dense = q.to_dense();
                let err = (reconstruct(&f) - &dense).amax() / dense.amax();
                assert!(err < 1e-12, "reconstruction error {err}");
                let eig: f64 = dense.clone().symmetric_eigen().eigenvalues.iter().map(|v| v.ln()).sum();
                assert!((f.log_det() - eig).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn solve_inverts_product() {
        let q = random_spd(40, 0.1, 7);
        let f = factorize(&q).unwrap();
        let x: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin()).collect();
        let back = f.solve(&q.mul_vec(&x));
        for (a, b) in back.iter().zip(&x) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn selected_inverse_matches_dense_inverse() {
        let q = random_spd(15, 0.25, 3);
        let f = factorize(&q).unwrap();
        let inv = q.to_dense().try_inverse().unwrap();
        let sel = f.selected_inverse();
        for i in 0..15 {
            assert!((sel.get(i, i).unwrap() - inv[(i, i)]).abs() < 1e-12);
        }
        for (i, j, _) in q.lower_triplets() {
            assert!((sel.get(i, j).unwrap() - inv[(i, j)]).abs() < 1e-12);
        }
    }

    #[test]
    fn indefinite_matrix_reports_pivot() {
        let q = SymCsc::from_lower_triplets(2, &[(0, 0, 1.0), (1, 0, 2.0), (1, 1, 1.0)], true);
        match factorize_with(&q, Ordering::Natural) {
            Err(Error::NotPositiveDefinite { pivot }) => assert_eq!(pivot, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn cache_reuses_symbolic_for_same_pattern() {
        let cache = FactorCache::new();
        let q = random_spd(20, 0.2, 11);
        let f1 = cache.factorize(&q).unwrap();
        let mut q2 = q.clone();
        q2.scale(2.0);
        let f2 = cache.factorize(&q2).unwrap();
        assert!(Arc::ptr_eq(f1.symbolic(), f2.symbolic()));
        assert!((f2.log_det() - f1.log_det() - 20.0 * 2f64.ln()).abs() < 1e-10);
    }
}
