//! Bayesian spatial quantile clustering of gridded time series.
//!
//! Each site's series follows an asymmetric-Laplace quantile regression on
//! a shared basis, with coefficients and scale determined by the site's
//! cluster. Cluster memberships carry a Potts Markov random field over a
//! site network. The posterior is explored with a Metropolis-within-Gibbs
//! sampler ([`mcmc::run_chain`]) whose Potts-parameter move is
//! likelihood-free.
//!
//! Every numeric routine is generic over [`Real`] (`f32` or `f64`); the
//! aliases at the crate root fix the precision to `f64`.

pub mod basis;
pub mod config;
pub mod error;
pub mod graph;
pub mod linalg;
pub mod mcmc;
pub mod panel;
pub mod quantfit;
pub mod samplers;
pub mod scalar;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
pub use scalar::Real;

pub type DesignMatrix = basis::DesignMatrix<f64>;
pub type TimeSeriesPanel = panel::TimeSeriesPanel<f64>;
pub type PottsParams = graph::PottsParams<f64>;
pub type ChainState = mcmc::ChainState<f64>;
pub type McmcConfig = mcmc::McmcConfig<f64>;
pub type PosteriorDraws = mcmc::PosteriorDraws<f64>;
pub type PosteriorSummary = mcmc::PosteriorSummary<f64>;
pub type QuantileFit = quantfit::QuantileFit<f64>;

pub type DesignMatrix32 = basis::DesignMatrix<f32>;
pub type TimeSeriesPanel32 = panel::TimeSeriesPanel<f32>;
pub type McmcConfig32 = mcmc::McmcConfig<f32>;
pub type PosteriorDraws32 = mcmc::PosteriorDraws<f32>;
