//! Parameter estimation: linear regression, prewindowed AR fits for a
//! range of orders, predictive least squares, and prediction-error ARMA
//! fitting.

mod ar;
mod arma;
mod regression;

pub use ar::{default_pls_start, fit_ar_ladder, pls_errors, ArFitLadder, ArOrderFit, PlsErrors};
pub use arma::{arma_cost_gradient, fit_arma, fit_arma_with, ArmaFit, ArmaOptions, StopReason};
pub use regression::{fit_regression, polynomial_design, RegressionFit};
