//! Conditional extremes model variants assembled as latent Gaussian models.
//!
//! Every episode row has the linear predictor
//! `x_j α(h, t) + γ(h, t) + x_j^β Z⁰(s, t)` with noise, where `h` is the
//! distance to the conditioning site. `α` and `γ` are splines in `h` (one
//! per time step), `α` may instead be the constant one or a parametric
//! decay, and `Z⁰` is an SPDE field, separable AR(1) in time, forced to zero
//! at the conditioning site by subtraction or by conditioning.

use serde::{Deserialize, Serialize};

use crate::episodes::EpisodeSet;
use crate::error::{Error, Result};
use crate::gmrf::{ar1_precision_pattern, factorize, FactorCache, matern_to_spde, spde_precision, Dimension, SpdeOperator, SpdeParams};
use crate::inference::hyper::{HyperKind, HyperLayout, HyperParams};
use crate::inference::latent::PriorTerms;
use crate::mesh::{condition_observation_matrix, distances, Mesh1D, Mesh2D, Point};
use crate::sparse::{CsrMatrix, PatternAssembler, SymCsc};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaForm {
    One,
    /// `exp(−(h/λ)^κ)` with `λ, κ` estimated.
    Parametric,
    /// `1 + spline(h)`, with the spline pinned to zero at `h = 0`.
    Spline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaMode {
    /// `β = 0`.
    Fixed,
    /// `β > 0` estimated.
    Estimated,
    /// `β ∈ (0, 1)` estimated.
    EstimatedBounded,
}

/// How the residual field is forced to zero at the conditioning site.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Residual {
    /// `Z(s, t) − Z(s₀, t₀)` through the observation matrix.
    SubtractS0,
    /// `Z | Z(s₀, t₀) = 0` through conditioning by kriging.
    ConditionS0,
    /// No residual field.
    None,
}

/// Order of the latent blocks; only affects the internal layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockOrder {
    #[default]
    SplinesFirst,
    ResidualFirst,
}

/// Fixed prior of the α and γ splines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplineSettings {
    pub interior_knots: usize,
    pub degree: usize,
    pub range: f64,
    pub sd: f64,
    /// AR(1) coefficient linking the per-time-step splines.
    pub time_rho: f64,
}

impl Default for SplineSettings {
    fn default() -> Self {
        Self { interior_knots: 14, degree: 2, range: 100.0, sd: 0.5, time_rho: 0.5 }
    }
}

// smoothness of the 1D spline prior (SPDE exponent 2)
const SPLINE_NU: f64 = 1.5;

/// Which model variant to fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub alpha: AlphaForm,
    pub gamma: bool,
    pub beta: BetaMode,
    pub residual: Residual,
    /// Matérn smoothness of the residual field (0.5 or 1).
    pub residual_nu: f64,
    pub splines: SplineSettings,
    #[serde(default)]
    pub order: BlockOrder,
}

impl ModelSpec {
    /// Models 0–6 of the spatial comparison.
    pub fn preset(number: u8) -> Result<Self> {
        let (alpha, gamma, beta, residual) = match number {
            0 => (AlphaForm::One, false, BetaMode::Fixed, Residual::SubtractS0),
            1 => (AlphaForm::Spline, false, BetaMode::Fixed, Residual::SubtractS0),
            2 => (AlphaForm::One, true, BetaMode::Fixed, Residual::SubtractS0),
            3 => (AlphaForm::Spline, true, BetaMode::Fixed, Residual::SubtractS0),
            4 => (AlphaForm::Spline, true, BetaMode::Estimated, Residual::SubtractS0),
            5 => (AlphaForm::Spline, false, BetaMode::Estimated, Residual::SubtractS0),
            6 => (AlphaForm::Spline, true, BetaMode::Fixed, Residual::None),
            _ => return Err(Error::invalid(format!("unknown model number {number} (0-6)"))),
        };
        Ok(Self { alpha, gamma, beta, residual, residual_nu: 0.5, splines: SplineSettings::default(), order: BlockOrder::default() })
    }

    pub fn validate(&self) -> Result<()> {
        if self.residual == Residual::None && self.alpha != AlphaForm::Spline && !self.gamma {
            return Err(Error::invalid("a model without residual field needs a spline α or a γ term"));
        }
        if self.residual == Residual::None && self.beta != BetaMode::Fixed {
            return Err(Error::invalid("β scales the residual field, which this model does not have"));
        }
        if !(self.residual_nu == 0.5 || self.residual_nu == 1.0) {
            return Err(Error::invalid(format!("residual smoothness {} not supported (0.5 or 1)", self.residual_nu)));
        }
        let s = &self.splines;
        if !(s.range > 0.0 && s.sd > 0.0 && s.time_rho.abs() < 1.0) || !(1..=2).contains(&s.degree) {
            return Err(Error::invalid("invalid spline prior settings"));
        }
        Ok(())
    }

    pub fn has_splines(&self) -> bool {
        self.alpha == AlphaForm::Spline || self.gamma
    }

    /// Knot sequence covering distances up to `max_distance`.
    pub fn spline_mesh(&self, max_distance: f64) -> Result<Mesh1D> {
        Mesh1D::equispaced(max_distance.max(f64::MIN_POSITIVE), self.splines.interior_knots, self.splines.degree, true)
    }

    /// Free hyperparameters for a block length `ell`.
    pub fn hyper_layout(&self, ell: usize) -> HyperLayout {
        let mut kinds = vec![HyperKind::NoiseSd];
        if self.residual != Residual::None {
            kinds.push(HyperKind::ResidualSd);
            kinds.push(HyperKind::ResidualRange);
            if ell > 1 {
                kinds.push(HyperKind::TimeRho);
            }
            match self.beta {
                BetaMode::Fixed => {}
                BetaMode::Estimated => kinds.push(HyperKind::Beta),
                BetaMode::EstimatedBounded => kinds.push(HyperKind::BetaBounded),
            }
        }
        if self.alpha == AlphaForm::Parametric {
            kinds.push(HyperKind::AlphaScale);
            kinds.push(HyperKind::AlphaShape);
        }
        HyperLayout::new(kinds)
    }
}

/// `exp(−(dist/λ)^κ)`.
pub fn parametric_alpha(dist: f64, scale: f64, shape: f64) -> f64 {
    if dist == 0.0 {
        return 1.0;
    }
    (-(dist / scale).powf(shape)).exp()
}

/// What one row of the assembled design refers to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowInfo {
    pub episode: usize,
    pub site: usize,
    pub time: usize,
    pub distance: f64,
    pub observed: bool,
    /// The conditioning entry `(s₀, t₀)`, which carries no noise.
    pub conditioning: bool,
}

impl RowInfo {
    pub fn in_likelihood(&self) -> bool {
        self.observed && !self.conditioning
    }
}

// `Aᵀ A` over likelihood rows, on the pattern of all rows so that masked
// rows keep their entries (needed for predictive variances).
fn masked_gram(design: &CsrMatrix, rows: &[RowInfo]) -> SymCsc {
    let weights: Vec<f64> = rows.iter().map(|r| if r.in_likelihood() { 1.0 } else { 0.0 }).collect();
    design.weighted_gram(&weights)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Block {
    Alpha,
    Gamma,
    Residual,
}

/// A model variant bound to data: design matrix, latent layout and priors.
#[derive(Debug, Clone)]
pub struct AssembledModel {
    spec: ModelSpec,
    ell: usize,
    n_sites: usize,
    conditioning_site: usize,
    conditioning_values: Vec<f64>,
    site_distances: Vec<f64>,
    spline_mesh: Mesh1D,
    rows: Vec<RowInfo>,
    response: Vec<f64>,
    design: CsrMatrix,
    likelihood_rows: Vec<usize>,
    likelihood_design: CsrMatrix,
    gram: SymCsc,
    latent_dim: usize,
    alpha_offset: Option<usize>,
    gamma_offset: Option<usize>,
    residual_offset: Option<usize>,
    spline_block: usize,
    residual_block: usize,
    spline_prior: Option<SymCsc>,
    spline_log_det: f64,
    residual_operator: Option<SpdeOperator>,
    residual_sites: Option<CsrMatrix>,
    residual_conditioning_row: Option<CsrMatrix>,
    constraint: Option<CsrMatrix>,
    layout: HyperLayout,
    posterior_assembler: PatternAssembler,
}

impl AssembledModel {
    /// Binds `spec` to the episodes. `mesh` carries the residual field and
    /// `spline_mesh` the α and γ splines; both must cover the sites.
    pub fn assemble(
        spec: &ModelSpec,
        episodes: &EpisodeSet,
        sites: &[Point],
        mesh: Option<&Mesh2D>,
        spline_mesh: &Mesh1D,
    ) -> Result<Self> {
        spec.validate()?;
        episodes.validate()?;
        if episodes.is_empty() {
            return Err(Error::invalid("no episodes to fit"));
        }
        if sites.len() != episodes.n_sites {
            return Err(Error::DimensionMismatch(format!(
                "{} site coordinates for {} episode sites",
                sites.len(),
                episodes.n_sites
            )));
        }
        let n = episodes.len();
        let ell = episodes.block_length;
        let d = episodes.n_sites;
        let s0 = episodes.conditioning_site;
        let xs = episodes.conditioning_values();
        if spec.beta != BetaMode::Fixed && xs.iter().any(|&x| !(x > 0.0)) {
            return Err(Error::invalid("estimating β needs positive conditioning values"));
        }
        let site_distances = distances(sites, sites[s0]);

        let full = spline_mesh.full_size();
        let spline_block = if spec.has_splines() { ell * full - 1 } else { 0 };
        let spline_rows: Vec<Vec<Vec<(usize, f64)>>> = if spec.has_splines() {
            let per_site = site_distances.iter().map(|&h| spline_mesh.full_basis(h)).collect::<Result<Vec<_>>>()?;
            (0..ell)
                .map(|t| {
                    per_site
                        .iter()
                        .map(|b| {
                            b.iter()
                                .filter(|&&(k, _)| !(t == 0 && k == 0))
                                .map(|&(k, v)| (t * full + k - 1, v))
                                .collect()
                        })
                        .collect()
                })
                .collect()
        } else {
            Vec::new()
        };

        let (residual_operator, residual_sites, residual_conditioning_row, m_z) = match spec.residual {
            Residual::None => (None, None, None, 0),
            _ => {
                let mesh = mesh.ok_or_else(|| Error::invalid("the residual field needs a spatial mesh"))?;
                let a_s = mesh.observation_matrix(sites)?;
                let a_s0 = a_s.select_rows(&[s0]);
                let op = SpdeOperator::new(&mesh.fem(), spec.residual_nu, Dimension::Two)?;
                (Some(op), Some(a_s), Some(a_s0), mesh.n_vertices())
            }
        };
        let residual_block = ell * m_z;

        let mut offset = 0;
        let mut place = |size: usize, present: bool| {
            present.then(|| {
                let o = offset;
                offset += size;
                o
            })
        };
        let with_alpha = spec.alpha == AlphaForm::Spline;
        let with_residual = spec.residual != Residual::None;
        let (alpha_offset, gamma_offset, residual_offset) = match spec.order {
            BlockOrder::SplinesFirst => {
                let a = place(spline_block, with_alpha);
                let g = place(spline_block, spec.gamma);
                let r = place(residual_block * n, with_residual);
                (a, g, r)
            }
            BlockOrder::ResidualFirst => {
                let r = place(residual_block * n, with_residual);
                let g = place(spline_block, spec.gamma);
                let a = place(spline_block, with_alpha);
                (a, g, r)
            }
        };
        let latent_dim = offset;

        let z_rows: Option<CsrMatrix> = match (spec.residual, &residual_sites, &residual_conditioning_row) {
            (Residual::SubtractS0, Some(a_s), Some(a_s0)) => Some(condition_observation_matrix(a_s, a_s0, ell)?),
            (Residual::ConditionS0, Some(a_s), Some(_)) => Some(CsrMatrix::block_diag(&vec![a_s; ell])),
            _ => None,
        };

        let mut rows = Vec::with_capacity(n * d * ell);
        let mut response = Vec::with_capacity(n * d * ell);
        let mut design_rows = Vec::with_capacity(n * d * ell);
        for (j, ep) in episodes.episodes.iter().enumerate() {
            let x = xs[j];
            for t in 0..ell {
                for i in 0..d {
                    let value = ep.values.get(i, t);
                    let info = RowInfo {
                        episode: j,
                        site: i,
                        time: t,
                        distance: site_distances[i],
                        observed: value.is_some(),
                        conditioning: i == s0 && t == 0,
                    };
                    let mut row = Vec::new();
                    if let Some(o) = alpha_offset {
                        row.extend(spline_rows[t][i].iter().map(|&(k, v)| (o + k, x * v)));
                    }
                    if let Some(o) = gamma_offset {
                        row.extend(spline_rows[t][i].iter().map(|&(k, v)| (o + k, v)));
                    }
                    if let (Some(o), Some(z)) = (residual_offset, &z_rows) {
                        let base = o + j * residual_block;
                        row.extend(z.row_entries(t * d + i).into_iter().map(|(k, v)| (base + k, v)));
                    }
                    rows.push(info);
                    response.push(value.unwrap_or(f64::NAN));
                    design_rows.push(row);
                }
            }
        }
        let design = CsrMatrix::from_rows(latent_dim, design_rows);
        let likelihood_rows: Vec<usize> = (0..rows.len()).filter(|&r| rows[r].in_likelihood()).collect();
        let likelihood_design = design.select_rows(&likelihood_rows);
        let gram = masked_gram(&design, &rows);

        let spline_prior = if spec.has_splines() {
            let p = matern_to_spde(spec.splines.range, spec.splines.sd, SPLINE_NU, Dimension::One)?;
            let q1 = spde_precision(&spline_mesh.fem(), &p)?;
            let qt = ar1_precision_pattern(ell, spec.splines.time_rho, true);
            Some(qt.kron(&q1).remove_indices(&[0]))
        } else {
            None
        };

        let constraint = match (spec.residual, &residual_conditioning_row, residual_offset) {
            (Residual::ConditionS0, Some(a_s0), Some(o)) => {
                let rows = (0..n)
                    .map(|j| a_s0.row_entries(0).into_iter().map(|(k, v)| (o + j * residual_block + k, v)).collect())
                    .collect();
                Some(CsrMatrix::from_rows(latent_dim, rows))
            }
            _ => None,
        };

        let layout = spec.hyper_layout(ell);
        let mut model = Self {
            spec: *spec,
            ell,
            n_sites: d,
            conditioning_site: s0,
            conditioning_values: xs,
            site_distances,
            spline_mesh: spline_mesh.clone(),
            rows,
            response,
            design,
            likelihood_rows,
            likelihood_design,
            gram,
            latent_dim,
            alpha_offset,
            gamma_offset,
            residual_offset,
            spline_block,
            residual_block,
            spline_log_det: match &spline_prior {
                Some(q) => factorize(q)?.log_det(),
                None => 0.0,
            },
            spline_prior,
            residual_operator,
            residual_sites,
            residual_conditioning_row,
            constraint,
            layout,
            posterior_assembler: PatternAssembler::new(0, &[]),
        };
        let prior = model.prior_precision(&HyperParams::default())?;
        let mut entries: Vec<(usize, usize)> = prior.lower_triplets().iter().map(|e| (e.0, e.1)).collect();
        entries.extend(model.gram.lower_triplets().iter().map(|e| (e.0, e.1)));
        model.posterior_assembler = PatternAssembler::new(latent_dim, &entries);
        Ok(model)
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn block_length(&self) -> usize {
        self.ell
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn n_episodes(&self) -> usize {
        self.conditioning_values.len()
    }

    pub fn conditioning_site(&self) -> usize {
        self.conditioning_site
    }

    pub fn conditioning_values(&self) -> &[f64] {
        &self.conditioning_values
    }

    pub fn site_distances(&self) -> &[f64] {
        &self.site_distances
    }

    pub fn spline_mesh(&self) -> &Mesh1D {
        &self.spline_mesh
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn rows(&self) -> &[RowInfo] {
        &self.rows
    }

    /// Row index of `(episode, site, time)`.
    pub fn row_index(&self, episode: usize, site: usize, time: usize) -> usize {
        (episode * self.ell + time) * self.n_sites + site
    }

    /// Observed Laplace values (NaN where missing), one per row.
    pub fn response(&self) -> &[f64] {
        &self.response
    }

    /// Latent-to-row map for every row, observed or not.
    pub fn design(&self) -> &CsrMatrix {
        &self.design
    }

    /// Rows entering the likelihood: observed and not the conditioning entry.
    pub fn likelihood_rows(&self) -> &[usize] {
        &self.likelihood_rows
    }

    pub fn likelihood_design(&self) -> &CsrMatrix {
        &self.likelihood_design
    }

    pub fn hyper_layout(&self) -> &HyperLayout {
        &self.layout
    }

    /// Linear constraints `B w = 0` registered by conditioning on `Z(s₀, t₀) = 0`.
    pub fn constraint(&self) -> Option<&CsrMatrix> {
        self.constraint.as_ref()
    }

    /// Length of each spline block (α or γ).
    pub fn spline_block_size(&self) -> usize {
        self.spline_block
    }

    pub fn alpha_offset(&self) -> Option<usize> {
        self.alpha_offset
    }

    pub fn gamma_offset(&self) -> Option<usize> {
        self.gamma_offset
    }

    pub fn residual_block_size(&self) -> usize {
        self.residual_block
    }

    /// Latent offset of the residual block of `episode`.
    pub fn residual_offset(&self, episode: usize) -> Option<usize> {
        self.residual_offset.map(|o| o + episode * self.residual_block)
    }

    pub fn residual_sites(&self) -> Option<&CsrMatrix> {
        self.residual_sites.as_ref()
    }

    pub fn residual_conditioning_row(&self) -> Option<&CsrMatrix> {
        self.residual_conditioning_row.as_ref()
    }

    pub fn residual_operator(&self) -> Option<&SpdeOperator> {
        self.residual_operator.as_ref()
    }

    /// Known part of each row's predictor: `x_j` times the fixed α, if any.
    pub fn offset(&self, h: &HyperParams) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| {
                let x = self.conditioning_values[r.episode];
                match self.spec.alpha {
                    AlphaForm::One | AlphaForm::Spline => x,
                    AlphaForm::Parametric => x * parametric_alpha(r.distance, h.alpha_scale, h.alpha_shape),
                }
            })
            .collect()
    }

    /// Residual precision for one episode before the `x^{−2β}` scaling.
    pub fn residual_precision(&self, h: &HyperParams) -> Result<Option<SymCsc>> {
        let Some(op) = &self.residual_operator else { return Ok(None) };
        let p: SpdeParams = matern_to_spde(h.residual_range, h.residual_sd, self.spec.residual_nu, Dimension::Two)?;
        let qs = op.precision(&p);
        if self.ell == 1 {
            return Ok(Some(qs));
        }
        if !(h.time_rho.abs() < 1.0) {
            return Err(Error::invalid(format!("time correlation {} outside (-1, 1)", h.time_rho)));
        }
        Ok(Some(ar1_precision_pattern(self.ell, h.time_rho, false).kron(&qs)))
    }

    /// `β` in effect: zero unless the model estimates it.
    pub fn beta(&self, h: &HyperParams) -> f64 {
        match self.spec.beta {
            BetaMode::Fixed => 0.0,
            _ => h.beta,
        }
    }

    /// Prior precision of the latent vector. The sparsity pattern does not depend on `h`.
    pub fn prior_precision(&self, h: &HyperParams) -> Result<SymCsc> {
        let beta = self.beta(h);
        let residual = self.residual_precision(h)?;
        let mut blocks: Vec<(Block, usize)> = Vec::new();
        if let Some(o) = self.alpha_offset {
            blocks.push((Block::Alpha, o));
        }
        if let Some(o) = self.gamma_offset {
            blocks.push((Block::Gamma, o));
        }
        if let Some(o) = self.residual_offset {
            blocks.push((Block::Residual, o));
        }
        blocks.sort_by_key(|b| b.1);
        let mut parts: Vec<(&SymCsc, f64)> = Vec::new();
        for (kind, _) in blocks {
            match kind {
                Block::Alpha | Block::Gamma => parts.push((self.spline_prior.as_ref().expect("spline prior"), 1.0)),
                Block::Residual => {
                    let q = residual.as_ref().expect("residual precision");
                    for &x in &self.conditioning_values {
                        let scale = if beta == 0.0 { 1.0 } else { x.powf(-2.0 * beta) };
                        parts.push((q, scale));
                    }
                }
            }
        }
        Ok(SymCsc::block_diag_scaled(&parts))
    }

    /// Log determinant of the prior and the constraint normalization,
    /// computed block by block.
    pub fn prior_terms(&self, h: &HyperParams, cache: &FactorCache) -> Result<PriorTerms> {
        let beta = self.beta(h);
        let n_splines = self.alpha_offset.is_some() as usize + self.gamma_offset.is_some() as usize;
        let mut log_det = n_splines as f64 * self.spline_log_det;
        let mut constraint_log_density = 0.0;
        if let Some(q) = self.residual_precision(h)? {
            let f = cache.factorize(&q)?;
            let block = self.residual_block as f64;
            let ld = f.log_det();
            let base_var = match (&self.constraint, &self.residual_conditioning_row) {
                (Some(_), Some(a_s0)) => {
                    let mut e = vec![0.0; self.residual_block];
                    for (k, v) in a_s0.row_entries(0) {
                        e[k] = v;
                    }
                    let solved = f.solve(&e);
                    Some(e.iter().zip(&solved).map(|(a, b)| a * b).sum::<f64>())
                }
                _ => None,
            };
            for &x in &self.conditioning_values {
                let log_scale = if beta == 0.0 { 0.0 } else { -2.0 * beta * x.ln() };
                log_det += ld + block * log_scale;
                if let Some(v) = base_var {
                    let var = v * (-log_scale).exp();
                    constraint_log_density += -0.5 * (2.0 * std::f64::consts::PI * var).ln();
                }
            }
        }
        Ok(PriorTerms { log_det, constraint_log_density })
    }

    /// `Q_prior + Aᵀ A / σ²` on a pattern fixed across hyperparameters.
    pub fn posterior_precision(&self, prior: &SymCsc, noise_variance: f64) -> SymCsc {
        let mut values = Vec::with_capacity(self.posterior_assembler.len());
        values.extend_from_slice(prior.values());
        values.extend(self.gram.values().iter().map(|g| g / noise_variance));
        self.posterior_assembler.assemble(&values)
    }

    fn spline_value(&self, offset: Option<usize>, latent: &[f64], distance: f64, time: usize) -> Result<f64> {
        let Some(o) = offset else { return Ok(0.0) };
        let full = self.spline_mesh.full_size();
        let mut s = 0.0;
        for (k, v) in self.spline_mesh.full_basis(distance)? {
            if time == 0 && k == 0 {
                continue;
            }
            s += v * latent[o + time * full + k - 1];
        }
        Ok(s)
    }

    /// `α(h, t)` for a latent vector and hyperparameters.
    pub fn alpha_at(&self, latent: &[f64], h: &HyperParams, distance: f64, time: usize) -> Result<f64> {
        match self.spec.alpha {
            AlphaForm::One => Ok(1.0),
            AlphaForm::Parametric => Ok(parametric_alpha(distance, h.alpha_scale, h.alpha_shape)),
            AlphaForm::Spline => Ok(1.0 + self.spline_value(self.alpha_offset, latent, distance, time)?),
        }
    }

    /// `γ(h, t)`; zero when the model has no γ term.
    pub fn gamma_at(&self, latent: &[f64], distance: f64, time: usize) -> Result<f64> {
        self.spline_value(self.gamma_offset, latent, distance, time)
    }

    /// Residual contribution `Z⁰` (before the `x^β` scaling) at a row.
    pub fn residual_at(&self, latent: &[f64], row: usize) -> f64 {
        let Some(o) = self.residual_offset else { return 0.0 };
        let r = &self.rows[row];
        let lo = o + r.episode * self.residual_block;
        let hi = lo + self.residual_block;
        let (idx, val) = self.design.row(row);
        idx.iter().zip(val).filter(|(&k, _)| k >= lo && k < hi).map(|(&k, &v)| v * latent[k]).sum()
    }

    /// Linear predictor for every row.
    pub fn predictor(&self, latent: &[f64], h: &HyperParams) -> Vec<f64> {
        let offset = self.offset(h);
        self.design.mul_vec(latent).iter().zip(offset).map(|(a, b)| a + b).collect()
    }

    /// A copy of the model with some response entries removed (masked).
    pub fn with_masked(&self, rows: &[usize]) -> Result<Self> {
        let mut out = self.clone();
        for &r in rows {
            if r >= out.rows.len() {
                return Err(Error::invalid(format!("row {r} out of range")));
            }
            if out.rows[r].conditioning {
                return Err(Error::invalid("the conditioning entry cannot be held out"));
            }
            out.rows[r].observed = false;
            out.response[r] = f64::NAN;
        }
        out.likelihood_rows = (0..out.rows.len()).filter(|&r| out.rows[r].in_likelihood()).collect();
        out.likelihood_design = out.design.select_rows(&out.likelihood_rows);
        // the gram pattern covers every row, so only its values change
        out.gram = masked_gram(&out.design, &out.rows);
        Ok(out)
    }
}
