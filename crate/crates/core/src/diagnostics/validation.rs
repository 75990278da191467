//! Hold-out cross-validation by refitting with masked responses.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::fit::{fit, FitConfig, PosteriorFit};
use crate::mesh::Point;
use crate::model::AssembledModel;

/// Held-out entry with its observed and predicted values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoldoutPrediction {
    pub row: usize,
    pub observed: f64,
    pub predicted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub rmse: f64,
    pub predictions: Vec<HoldoutPrediction>,
}

fn holdout_candidate(model: &AssembledModel, row: usize) -> bool {
    let r = &model.rows()[row];
    r.observed && !r.conditioning
}

/// Observed rows at sites east of and south of `origin`.
pub fn quadrant_rows(model: &AssembledModel, sites: &[Point], origin: Point) -> Result<Vec<usize>> {
    if sites.len() != model.n_sites() {
        return Err(Error::DimensionMismatch(format!("{} coordinates for {} sites", sites.len(), model.n_sites())));
    }
    Ok((0..model.rows().len())
        .filter(|&r| {
            let p = sites[model.rows()[r].site];
            holdout_candidate(model, r) && p[0] > origin[0] && p[1] < origin[1]
        })
        .collect())
}

/// Observed rows of the episodes in fold `fold` of a seeded random split
/// of the episodes into `folds` groups.
pub fn episode_fold_rows(model: &AssembledModel, folds: usize, fold: usize, seed: u64) -> Result<Vec<usize>> {
    let n = model.n_episodes();
    if folds < 2 || fold >= folds || folds > n {
        return Err(Error::invalid(format!("fold {fold} of {folds} is invalid for {n} episodes")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut chosen = vec![false; n];
    for (k, &e) in order.iter().enumerate() {
        chosen[e] = k % folds == fold;
    }
    Ok((0..model.rows().len()).filter(|&r| chosen[model.rows()[r].episode] && holdout_candidate(model, r)).collect())
}

/// Posterior predictive mean of the linear predictor at every row.
pub fn predictive_mean(fit: &PosteriorFit) -> Vec<f64> {
    let model = fit.model();
    let mut out = vec![0.0; model.rows().len()];
    for p in fit.grid() {
        for (o, v) in out.iter_mut().zip(model.predictor(p.conditional.mean(), &p.params)) {
            *o += p.weight * v;
        }
    }
    out
}

/// RMSE of predictions against observed values.
pub fn rmse_of(predictions: &[HoldoutPrediction]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::invalid("the holdout is empty"));
    }
    let ss: f64 = predictions.iter().map(|p| (p.observed - p.predicted).powi(2)).sum();
    Ok((ss / predictions.len() as f64).sqrt())
}

/// Refits without the `holdout` rows and scores their posterior predictive means.
pub fn rmse_cv(model: &AssembledModel, cfg: &FitConfig, holdout: &[usize]) -> Result<CvResult> {
    if holdout.is_empty() {
        return Err(Error::invalid("the holdout is empty"));
    }
    for &r in holdout {
        if r >= model.rows().len() || !model.rows()[r].observed {
            return Err(Error::invalid(format!("holdout row {r} is not an observed entry")));
        }
    }
    let masked = Arc::new(model.with_masked(holdout)?);
    let refit = fit(masked, cfg)?;
    let mean = predictive_mean(&refit);
    let predictions: Vec<HoldoutPrediction> = holdout
        .iter()
        .map(|&r| HoldoutPrediction { row: r, observed: model.response()[r], predicted: mean[r] })
        .collect();
    Ok(CvResult { rmse: rmse_of(&predictions)?, predictions })
}
