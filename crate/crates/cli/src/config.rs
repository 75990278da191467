//! Run configuration, read from a TOML file. Every key has a default.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use condex::diagnostics::DiagnosticConfig;
use condex::inference::{FitConfig, Priors};
use condex::model::{ModelSpec, Residual, SplineSettings};
use condex::synthetic::SyntheticConfig;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub marginal: MarginalConfig,
    pub episodes: EpisodeConfig,
    pub model: ModelConfig,
    pub mesh: MeshConfig,
    pub priors: Priors,
    pub fit: FitSettings,
    pub diagnostics: DiagnosticConfig,
    pub cv: CvConfig,
    pub simulate: SimulateConfig,
    pub chi: ChiConfig,
    pub synth: SyntheticConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// CSV with header `site_id,lon,lat,time,value`.
    pub input: PathBuf,
    pub output_dir: PathBuf,
    /// Per-axis multipliers applied to (lon, lat) before `coordinate_scale`.
    pub coordinate_multipliers: [f64; 2],
    pub coordinate_scale: f64,
    /// Conditioning site id; defaults to the site nearest the centroid.
    pub conditioning_site: Option<String>,
    pub threads: Option<usize>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            input: PathBuf::from("data.csv"),
            output_dir: PathBuf::from("out"),
            coordinate_multipliers: [1.0, 1.0],
            coordinate_scale: 1.0,
            conditioning_site: None,
            threads: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarginalConfig {
    pub quantile: f64,
}

impl Default for MarginalConfig {
    fn default() -> Self {
        Self { quantile: 0.95 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeConfig {
    /// Probability level of the Laplace-scale threshold at the conditioning site.
    pub threshold_quantile: f64,
    pub run_length: usize,
    pub block_length: usize,
    /// Candidate run lengths for the cluster-count table.
    pub candidate_run_lengths: Vec<usize>,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self { threshold_quantile: 0.95, run_length: 12, block_length: 7, candidate_run_lengths: (1..=20).collect() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Model variant 0 to 6.
    pub preset: u8,
    pub residual: Option<Residual>,
    pub residual_nu: f64,
    pub splines: SplineSettings,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { preset: 3, residual: None, residual_nu: 0.5, splines: SplineSettings::default() }
    }
}

impl ModelConfig {
    pub fn spec(&self) -> CliResult<ModelSpec> {
        let mut spec = ModelSpec::preset(self.preset)?;
        if let Some(r) = self.residual {
            spec.residual = r;
        }
        spec.residual_nu = self.residual_nu;
        spec.splines = self.splines;
        spec.validate()?;
        Ok(spec)
    }
}

/// Mesh edge lengths in scaled coordinate units; unset values are derived
/// from the site spacing.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshConfig {
    pub inner_edge: Option<f64>,
    pub outer_edge: Option<f64>,
    pub extension: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSettings {
    pub max_iter: usize,
    pub f_tol: f64,
    pub fd_step: f64,
}

impl Default for FitSettings {
    fn default() -> Self {
        let d = FitConfig::default();
        Self { max_iter: d.max_iter, f_tol: d.f_tol, fd_step: d.fd_step }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvConfig {
    /// Corner of the held-out quadrant (sites east and south of it), in
    /// scaled coordinates; defaults to the conditioning site.
    pub quadrant_origin: Option<[f64; 2]>,
    pub folds: usize,
    pub seed: u64,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self { quadrant_origin: None, folds: 7, seed: 1 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub episodes: usize,
    /// Probability level of the conditioning threshold.
    pub threshold_quantile: f64,
    pub seed: u64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self { episodes: 1000, threshold_quantile: 0.95, seed: 1 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChiConfig {
    pub q: Vec<f64>,
    pub rings: usize,
    pub max_lag: usize,
}

impl Default for ChiConfig {
    fn default() -> Self {
        Self { q: vec![0.9, 0.95, 0.99], rings: 5, max_lag: 0 }
    }
}

fn check(ok: bool, msg: &str) -> CliResult<()> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Config(msg.to_string()))
    }
}

fn in_unit(p: f64) -> bool {
    p > 0.0 && p < 1.0
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        // relative paths are taken from the config file's directory
        let base = path.parent().unwrap_or(Path::new("."));
        if cfg.data.input.is_relative() {
            cfg.data.input = base.join(&cfg.data.input);
        }
        if cfg.data.output_dir.is_relative() {
            cfg.data.output_dir = base.join(&cfg.data.output_dir);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks value ranges that do not need the data.
    pub fn validate(&self) -> CliResult<()> {
        check(self.marginal.quantile > 0.5 && self.marginal.quantile < 1.0, "marginal.quantile must lie in (0.5, 1)")?;
        check(in_unit(self.episodes.threshold_quantile), "episodes.threshold_quantile must lie in (0, 1)")?;
        check(self.episodes.run_length >= 1, "episodes.run_length must be at least 1")?;
        check(self.episodes.block_length >= 1, "episodes.block_length must be at least 1")?;
        let d = &self.data;
        check(d.coordinate_scale > 0.0 && d.coordinate_multipliers.iter().all(|m| *m > 0.0), "coordinate scale and multipliers must be positive")?;
        check(d.threads != Some(0), "data.threads must be positive")?;
        for v in [self.mesh.inner_edge, self.mesh.outer_edge, self.mesh.extension].into_iter().flatten() {
            check(v > 0.0, "mesh lengths must be positive")?;
        }
        self.model.spec()?;
        check(self.fit.max_iter > 0 && self.fit.f_tol > 0.0 && self.fit.fd_step > 0.0, "fit settings must be positive")?;
        check(self.diagnostics.waic_samples >= 2, "diagnostics.waic_samples must be at least 2")?;
        check(in_unit(self.diagnostics.region_q), "diagnostics.region_q must lie in (0, 1)")?;
        check(self.diagnostics.chi_q.iter().all(|q| in_unit(*q)), "diagnostics.chi_q entries must lie in (0, 1)")?;
        check(self.diagnostics.rings >= 1 && self.diagnostics.n_sim >= 1, "diagnostics.rings and n_sim must be positive")?;
        check(self.cv.folds >= 2, "cv.folds must be at least 2")?;
        check(self.simulate.episodes >= 1 && in_unit(self.simulate.threshold_quantile), "invalid simulate settings")?;
        check(!self.chi.q.is_empty() && self.chi.q.iter().all(|q| in_unit(*q)) && self.chi.rings >= 1, "invalid chi settings")?;
        Ok(())
    }

    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            max_iter: self.fit.max_iter,
            f_tol: self.fit.f_tol,
            fd_step: self.fit.fd_step,
            priors: self.priors,
            ..FitConfig::default()
        }
    }
}
