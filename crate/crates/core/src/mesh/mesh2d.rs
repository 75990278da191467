use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmrf::FemMatrices;
use crate::sparse::{CsrMatrix, SymCsc};

pub type Point = [f64; 2];

/// Triangulation carrying piecewise-linear basis functions.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh2D {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    /// Bounding box of the fine zone `[xmin, xmax, ymin, ymax]`, when built here.
    inner_box: Option<[f64; 4]>,
    locator: Locator,
}

#[derive(Serialize, Deserialize)]
struct MeshDocument {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
}

fn axis(lo: f64, hi: f64, inner: f64, outer: f64, extension: f64) -> Vec<f64> {
    let cells = |len: f64, h: f64| ((len / h) - 1e-9).ceil().max(1.0) as usize;
    let mut out = Vec::new();
    let nout = cells(extension, outer);
    for k in 0..nout {
        out.push(lo - extension + extension * k as f64 / nout as f64);
    }
    let nin = if hi > lo { cells(hi - lo, inner) } else { 1 };
    for k in 0..nin {
        out.push(lo + (hi - lo) * k as f64 / nin as f64);
    }
    for k in 0..=nout {
        out.push(hi + extension * k as f64 / nout as f64);
    }
    out
}

impl Mesh2D {
    /// Structured triangulation: the bounding box of `sites` at `inner_edge`
    /// spacing, surrounded by a band of width `extension` at `outer_edge`
    /// spacing. Fine-zone triangles come first, so points on the interface
    /// belong to the fine zone.
    pub fn build(sites: &[Point], inner_edge: f64, outer_edge: f64, extension: f64) -> Result<Self> {
        if !(inner_edge > 0.0 && outer_edge >= inner_edge && extension > 0.0) {
            return Err(Error::invalid(format!(
                "mesh needs 0 < inner edge ({inner_edge}) <= outer edge ({outer_edge}) and extension ({extension}) > 0"
            )));
        }
        if sites.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(Error::Data("non-finite site coordinate".into()));
        }
        if !has_non_collinear_triple(sites) {
            return Err(Error::Degenerate("need at least three non-collinear sites".into()));
        }
        let (mut xmin, mut xmax, mut ymin, mut ymax) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for p in sites {
            xmin = xmin.min(p[0]);
            xmax = xmax.max(p[0]);
            ymin = ymin.min(p[1]);
            ymax = ymax.max(p[1]);
        }
        let xs = axis(xmin, xmax, inner_edge, outer_edge, extension);
        let ys = axis(ymin, ymax, inner_edge, outer_edge, extension);
        let nx = xs.len();
        let mut vertices = Vec::with_capacity(nx * ys.len());
        for &y in &ys {
            for &x in &xs {
                vertices.push([x, y]);
            }
        }
        let id = |i: usize, j: usize| j * nx + i;
        let eps = 1e-9 * (xmax - xmin).max(ymax - ymin).max(1.0);
        let is_inner = |i: usize, j: usize| {
            xs[i] >= xmin - eps && xs[i + 1] <= xmax + eps && ys[j] >= ymin - eps && ys[j + 1] <= ymax + eps
        };
        let mut inner = Vec::new();
        let mut outer = Vec::new();
        for j in 0..ys.len() - 1 {
            for i in 0..nx - 1 {
                let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
                let target = if is_inner(i, j) { &mut inner } else { &mut outer };
                target.push([a, b, c]);
                target.push([a, c, d]);
            }
        }
        inner.extend(outer);
        let mut mesh = Self::from_parts(vertices, inner)?;
        mesh.inner_box = Some([xmin, xmax, ymin, ymax]);
        Ok(mesh)
    }

    /// Wraps an externally produced triangulation.
    pub fn from_parts(vertices: Vec<Point>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        if vertices.len() < 3 || triangles.is_empty() {
            return Err(Error::Degenerate("mesh needs at least one triangle".into()));
        }
        for (k, t) in triangles.iter().enumerate() {
            if t.iter().any(|&v| v >= vertices.len()) {
                return Err(Error::invalid(format!("triangle {k} references a missing vertex")));
            }
            if signed_area(&vertices, t).abs() <= 0.0 {
                return Err(Error::Degenerate(format!("triangle {k} has zero area")));
            }
        }
        let locator = Locator::new(&vertices, &triangles);
        Ok(Self { vertices, triangles, inner_box: None, locator })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: MeshDocument = serde_json::from_str(text)?;
        Self::from_parts(doc.vertices, doc.triangles)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&MeshDocument { vertices: self.vertices.clone(), triangles: self.triangles.clone() })?)
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn inner_box(&self) -> Option<[f64; 4]> {
        self.inner_box
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    /// Barycentric weights of `p` in the lowest-index triangle containing it.
    pub fn locate(&self, p: Point) -> Option<[(usize, f64); 3]> {
        self.locator.candidates(p).iter().find_map(|&t| {
            let tri = self.triangles[t];
            barycentric(&self.vertices, &tri, p).map(|w| [(tri[0], w[0]), (tri[1], w[1]), (tri[2], w[2])])
        })
    }

    /// Interpolation rows for each point.
    pub fn observation_matrix(&self, points: &[Point]) -> Result<CsrMatrix> {
        let rows = points
            .iter()
            .enumerate()
            .map(|(index, &p)| {
                self.locate(p)
                    .map(|w| w.iter().copied().filter(|e| e.1 != 0.0).collect())
                    .ok_or(Error::OutsideMesh { index, x: p[0], y: p[1] })
            })
            .collect::<Result<Vec<Vec<(usize, f64)>>>>()?;
        Ok(CsrMatrix::from_rows(self.n_vertices(), rows))
    }

    /// Lumped mass (one third of adjacent areas) and linear-element stiffness.
    pub fn fem(&self) -> FemMatrices {
        let n = self.n_vertices();
        let mut mass = vec![0.0; n];
        let mut trip = Vec::with_capacity(6 * self.triangles.len());
        for t in &self.triangles {
            let area = signed_area(&self.vertices, t).abs();
            let p = t.map(|v| self.vertices[v]);
            // edge vectors opposite each vertex
            let e = [
                [p[2][0] - p[1][0], p[2][1] - p[1][1]],
                [p[0][0] - p[2][0], p[0][1] - p[2][1]],
                [p[1][0] - p[0][0], p[1][1] - p[0][1]],
            ];
            for a in 0..3 {
                mass[t[a]] += area / 3.0;
                for b in 0..3 {
                    if t[a] >= t[b] {
                        let dot = e[a][0] * e[b][0] + e[a][1] * e[b][1];
                        trip.push((t[a], t[b], dot / (4.0 * area)));
                    }
                }
            }
        }
        FemMatrices { mass, stiffness: SymCsc::from_lower_triplets(n, &trip, false) }
    }
}

fn has_non_collinear_triple(sites: &[Point]) -> bool {
    let Some(&a) = sites.first() else { return false };
    let scale = sites.iter().map(|p| (p[0] - a[0]).abs().max((p[1] - a[1]).abs())).fold(0.0, f64::max);
    if scale == 0.0 {
        return false;
    }
    let Some(&b) = sites.iter().find(|p| (p[0] - a[0]).abs().max((p[1] - a[1]).abs()) > 1e-9 * scale) else {
        return false;
    };
    sites.iter().any(|c| {
        let cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
        cross.abs() > 1e-9 * scale * scale
    })
}

fn signed_area(v: &[Point], t: &[usize; 3]) -> f64 {
    let (a, b, c) = (v[t[0]], v[t[1]], v[t[2]]);
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
}

fn barycentric(v: &[Point], t: &[usize; 3], p: Point) -> Option<[f64; 3]> {
    let (a, b, c) = (v[t[0]], v[t[1]], v[t[2]]);
    let det = (b[1] - c[1]) * (a[0] - c[0]) + (c[0] - b[0]) * (a[1] - c[1]);
    let l1 = ((b[1] - c[1]) * (p[0] - c[0]) + (c[0] - b[0]) * (p[1] - c[1])) / det;
    let l2 = ((c[1] - a[1]) * (p[0] - c[0]) + (a[0] - c[0]) * (p[1] - c[1])) / det;
    let l3 = 1.0 - l1 - l2;
    let tol = 1e-10;
    if l1 < -tol || l2 < -tol || l3 < -tol {
        return None;
    }
    let clean = |x: f64| if x.abs() < 1e-14 { 0.0 } else { x.max(0.0) };
    let w = [clean(l1), clean(l2), clean(l3)];
    let s: f64 = w.iter().sum();
    Some(w.map(|x| x / s))
}

/// Uniform bucket grid over the mesh bounding box.
#[derive(Debug, Clone, PartialEq)]
struct Locator {
    origin: Point,
    cell: Point,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<usize>>,
}

impl Locator {
    fn new(vertices: &[Point], triangles: &[[usize; 3]]) -> Self {
        let (mut lo, mut hi) = ([f64::MAX; 2], [f64::MIN; 2]);
        for p in vertices {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let side = (triangles.len() as f64).sqrt().ceil().max(1.0) as usize;
        let (nx, ny) = (side, side);
        let cell = [((hi[0] - lo[0]) / nx as f64).max(1e-300), ((hi[1] - lo[1]) / ny as f64).max(1e-300)];
        let mut buckets = vec![Vec::new(); nx * ny];
        for (k, t) in triangles.iter().enumerate() {
            let xs = t.map(|v| vertices[v][0]);
            let ys = t.map(|v| vertices[v][1]);
            let span = |vals: [f64; 3], o: f64, c: f64, n: usize| {
                let a = vals.iter().cloned().fold(f64::MAX, f64::min);
                let b = vals.iter().cloned().fold(f64::MIN, f64::max);
                let i0 = (((a - o) / c).floor() as isize - 1).clamp(0, n as isize - 1) as usize;
                let i1 = (((b - o) / c).floor() as isize + 1).clamp(0, n as isize - 1) as usize;
                (i0, i1)
            };
            let (i0, i1) = span(xs, lo[0], cell[0], nx);
            let (j0, j1) = span(ys, lo[1], cell[1], ny);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    buckets[j * nx + i].push(k);
                }
            }
        }
        Self { origin: lo, cell, nx, ny, buckets }
    }

    fn candidates(&self, p: Point) -> &[usize] {
        let fi = (p[0] - self.origin[0]) / self.cell[0];
        let fj = (p[1] - self.origin[1]) / self.cell[1];
        if !(fi > -1e-9 && fj > -1e-9 && fi < self.nx as f64 + 1e-9 && fj < self.ny as f64 + 1e-9) {
            return &[];
        }
        let i = (fi.floor().max(0.0) as usize).min(self.nx - 1);
        let j = (fj.floor().max(0.0) as usize).min(self.ny - 1);
        &self.buckets[j * self.nx + i]
    }
}
