//! Causal effects of a one-time, permanent intervention on a single time series.
//!
//! A Bayesian structural time-series model (local linear trend, optional
//! seasonal block, static regression on covariates) is fitted to the
//! pre-intervention periods by Gibbs sampling. The untreated outcome path is
//! then imputed for the post-intervention periods and contrasted with the
//! observed series to give pointwise and cumulative effects with credible
//! intervals.
//!
//! The numerical core is generic over the scalar type through [`Real`]; the
//! aliases at the bottom of this file fix it to `f64` (and `f32` for the
//! filtering layer) for everyday use.
//!
//! Covariates must not themselves be affected by the intervention. That cannot
//! be checked from the data and remains the caller's responsibility.

pub mod error;
pub mod impact;
pub mod inference;
pub mod io;
pub mod oracle;
pub mod sampler;
pub mod scalar;
pub mod series;
pub mod state_space;

pub use error::{Error, Result};
pub use impact::EffectSummary;
pub use scalar::Real;

pub type ValidatedDataset = series::ValidatedDataset<f64>;
pub type CovariateSet = series::CovariateSet<f64>;
pub type OutcomeSeries = series::OutcomeSeries<f64>;
pub type AnalysisConfig = series::AnalysisConfig<f64>;
pub type Priors = sampler::Priors<f64>;
pub type VarianceSet = state_space::VarianceSet<f64>;
pub type SystemMatrices = state_space::SystemMatrices<f64>;
pub type FilterResult = inference::FilterResult<f64>;
pub type SmootherResult = inference::SmootherResult<f64>;
pub type PosteriorDraws = sampler::PosteriorDraws<f64>;
pub type CounterfactualDraws = impact::CounterfactualDraws<f64>;
pub type ScenarioSpec = oracle::ScenarioSpec<f64>;

pub type SystemMatricesF32 = state_space::SystemMatrices<f32>;
pub type FilterResultF32 = inference::FilterResult<f32>;
pub type SmootherResultF32 = inference::SmootherResult<f32>;
