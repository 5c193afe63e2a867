//! Stochastic B-series: colored rooted trees, weight functions, composition
//! laws, and order conditions for exponential Runge-Kutta methods applied to
//! semi-linear SDEs.

pub mod cli;
pub mod elementary;
pub mod error;
pub mod forest_ops;
pub mod jet;
pub mod numbers;
pub mod sdesim;
pub mod semilinear_erk;
pub mod series;
pub mod stochastic_eval;
pub mod trees;
pub mod weight;

pub use error::{Error, Result};
