//! Mortality and fertility forecasting with one Gaussian process per age.
//!
//! Each age-specific log-rate series gets a natural cubic spline mean (fitted
//! by least squares) and a stationary covariance, by default a spectral
//! mixture, whose hyperparameters maximize the marginal likelihood. Forecasts
//! come from the Gaussian conditional distribution. A Lee-Carter baseline and
//! a rolling-window RMSE harness are included for comparison.

pub mod data_io;
pub mod demography;
pub mod evaluation;
pub mod gp;
pub mod kernels;
pub mod lee_carter;
pub mod optim;
pub mod spline;

pub use demography::{CurveForecast, DemographicSurface, SurfaceKind, SurfaceModel};
pub use gp::{FitConfig, GPModel, PredictiveDistribution, TrainingSet};
pub use kernels::{KernelFamily, KernelSpec};
pub use spline::{KnotVector, MeanModel};
