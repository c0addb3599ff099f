//! Predictive densities for normal linear regression under α-divergence
//! loss: canonical reduction, generalized Bayes and plug-in predictive
//! densities, Monte Carlo risk, and positivity bounds.

pub mod bounds;
pub mod canonical;
pub mod error;
pub mod identities;
pub mod io;
pub mod linalg;
pub mod predictive;
pub mod quadrature;
pub mod risk;
pub mod rng;
pub mod special;
pub mod summary;

pub use error::{Error, Result};
