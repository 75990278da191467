//! Model comparison and validation.
//!
//! WAIC is reported as `−2 (lppd − p_eff)`, so smaller values indicate a
//! better fit.

mod criteria;
mod extremes;
mod validation;

use std::io::Write;

use serde::{Deserialize, Serialize};

pub use criteria::{cpo_pit, cpo_pit_from_draws, waic, waic_from_log_lik, CpoMethod, CpoPit, WaicResult};
pub use extremes::{
    empirical_chi_curves, exceedance_fractions, model_chi_curves, region_exceedance, ChiRow, Region, RegionPartition,
    RegionRow,
};
pub use validation::{episode_fold_rows, predictive_mean, quadrant_rows, rmse_cv, rmse_of, CvResult, HoldoutPrediction};

use crate::episodes::EpisodeSet;
use crate::error::Result;
use crate::field::Field;
use crate::inference::fit::PosteriorFit;
use crate::par::Execution;
use crate::simulate::ConditionalSimulator;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiagnosticConfig {
    pub waic_samples: usize,
    pub cpo: CpoMethod,
    pub rings: usize,
    pub region_q: f64,
    pub chi_q: Vec<f64>,
    pub n_sim: usize,
    pub seed: u64,
}

impl Default for DiagnosticConfig {
    fn default() -> Self {
        Self {
            waic_samples: 1000,
            cpo: CpoMethod::Integrated,
            rings: 5,
            region_q: 0.9,
            chi_q: vec![0.9, 0.95, 0.99],
            n_sim: 10_000,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticReport {
    /// Content hash of the fit the report was computed from, when known.
    pub fit_hash: Option<String>,
    pub waic: WaicResult,
    pub cpo_pit: CpoPit,
    pub rmse_cv: Option<f64>,
    pub region_exceedance: Vec<RegionRow>,
    pub chi_curves: Vec<ChiRow>,
}

/// Computes every diagnostic except cross-validation, which needs refits.
/// `laplace_field` is the full Laplace-scale series used for empirical χ.
pub fn diagnose(
    fit: &PosteriorFit,
    episodes: Option<&EpisodeSet>,
    laplace_field: Option<&Field>,
    cfg: &DiagnosticConfig,
    exec: Execution,
) -> Result<DiagnosticReport> {
    let model = fit.model();
    let waic = waic(fit, cfg.waic_samples, cfg.seed, exec)?;
    let cpo_pit = cpo_pit(fit, cfg.cpo, exec)?;
    let partition = RegionPartition::rings(model.site_distances(), model.conditioning_site(), cfg.rings)?;
    let sim = ConditionalSimulator::from_fit(fit)?;
    let region_exceedance = region_exceedance(&sim, episodes, &partition, cfg.region_q, cfg.n_sim, cfg.seed, exec)?;
    let mut chi_curves = model_chi_curves(&sim, &partition, &cfg.chi_q, cfg.n_sim, cfg.seed, exec)?;
    if let Some(field) = laplace_field {
        for lag in 0..model.block_length() {
            for e in empirical_chi_curves(field, model.conditioning_site(), &partition, &cfg.chi_q, lag)? {
                if let Some(row) =
                    chi_curves.iter_mut().find(|r| r.region == e.region && r.time == e.time && r.q == e.q)
                {
                    row.empirical = e.empirical;
                }
            }
        }
    }
    Ok(DiagnosticReport { fit_hash: None, waic, cpo_pit, rmse_cv: None, region_exceedance, chi_curves })
}

impl DiagnosticReport {
    /// One row per likelihood observation.
    pub fn write_observations_csv<W: Write>(&self, fit: &PosteriorFit, out: W) -> Result<()> {
        let rows = fit.model().rows();
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["row", "episode", "site", "time", "cpo", "pit", "reliable"])?;
        let c = &self.cpo_pit;
        for k in 0..c.rows.len() {
            let r = &rows[c.rows[k]];
            w.write_record([
                c.rows[k].to_string(),
                r.episode.to_string(),
                r.site.to_string(),
                r.time.to_string(),
                c.cpo[k].to_string(),
                c.pit[k].to_string(),
                c.reliable[k].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_regions_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.region_exceedance {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_chi_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.chi_curves {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}
