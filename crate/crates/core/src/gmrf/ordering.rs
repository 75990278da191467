//! Fill-reducing orderings for sparse Cholesky.

use std::collections::BTreeSet;

use crate::sparse::SymCsc;

/// Choice of symmetric permutation applied before factorization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Ordering {
    Natural,
    #[default]
    MinimumDegree,
}

/// Returns `perm` with `perm[new] = old`.
pub fn compute(a: &SymCsc, ordering: Ordering) -> Vec<usize> {
    match ordering {
        Ordering::Natural => (0..a.dim()).collect(),
        Ordering::MinimumDegree => minimum_degree(a),
    }
}

/// Minimum-degree ordering on the explicit elimination graph.
///
/// Nodes whose initial degree exceeds `max(16, 10 sqrt(n))` are treated as
/// dense and ordered last. Ties are broken by the smaller node index, so the
/// result is deterministic.
pub fn minimum_degree(a: &SymCsc) -> Vec<usize> {
    let n = a.dim();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, j, _) in a.lower_triplets() {
        if i != j {
            adj[i].push(j);
            adj[j].push(i);
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }

    let dense_limit = 16usize.max((10.0 * (n as f64).sqrt()) as usize);
    let dense: Vec<bool> = adj.iter().map(|l| l.len() > dense_limit).collect();
    if dense.iter().any(|&d| d) {
        for list in &mut adj {
            list.retain(|&u| !dense[u]);
        }
    }

    let mut queue: BTreeSet<(usize, usize)> = BTreeSet::new();
    for v in 0..n {
        if !dense[v] {
            queue.insert((adj[v].len(), v));
        }
    }
    let mut perm = Vec::with_capacity(n);
    let mut merged = Vec::new();
    while let Some((_, v)) = queue.pop_first() {
        perm.push(v);
        let nbrs = std::mem::take(&mut adj[v]);
        for &u in &nbrs {
            queue.remove(&(adj[u].len(), u));
            merged.clear();
            let old = &adj[u];
            let (mut p, mut q) = (0, 0);
            while p < old.len() || q < nbrs.len() {
                let next = match (old.get(p), nbrs.get(q)) {
                    (Some(&x), Some(&y)) if x == y => {
                        p += 1;
                        q += 1;
                        x
                    }
                    (Some(&x), Some(&y)) if x < y => {
                        p += 1;
                        x
                    }
                    (Some(_), Some(&y)) => {
                        q += 1;
                        y
                    }
                    (Some(&x), None) => {
                        p += 1;
                        x
                    }
                    (None, Some(&y)) => {
                        q += 1;
                        y
                    }
                    (None, None) => unreachable!(),
                };
                if next != u && next != v {
                    merged.push(next);
                }
            }
            std::mem::swap(&mut adj[u], &mut merged);
            queue.insert((adj[u].len(), u));
        }
    }
    perm.extend((0..n).filter(|&v| dense[v]));
    perm
}
