//! Bayesian inference for the latent Gaussian models: priors, exact
//! marginal likelihood, hyperparameter posterior and posterior sampling.

pub mod fit;
pub mod hyper;
pub mod latent;
pub mod priors;

pub use fit::{
    explore, fit, latent_posterior, log_marginal_likelihood, posterior_sample, FitConfig, FitSummary, GridPoint, HyperGrid,
    HyperSummary, ModelEvaluator, PosteriorDraw, PosteriorFit,
};
pub use hyper::{HyperKind, HyperLayout, HyperParams, Priors};
pub use latent::{condition, GaussianSystem, LatentConditional, PriorTerms};
pub use priors::{lognormal_logdensity, pc_prior_logdensity, PcKind, TailProb};
