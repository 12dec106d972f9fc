//! Order and structure estimation for AR and ARMA models by stochastic
//! complexity, with the competing BIC, KIC/KICc and PLS criteria.

pub mod criteria;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod fisher;
pub mod model;
pub mod qmc;
pub mod sobol;

pub use error::{Error, Result};
