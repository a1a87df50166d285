//! Linear-Gaussian filtering at two fidelities - the exact Kalman filter and
//! an unbiased square-root ensemble filter - together with the measurement
//! tooling for showing that ensemble statistics converge to the exact ones
//! at the Monte Carlo rate: pointwise inequality fuzzing, Lp
//! law-of-large-numbers experiments, and a seeded convergence harness with
//! log-log rate fits.

pub mod bounds;
pub mod cli;
pub mod config;
pub mod convergence;
pub mod ensemble;
pub mod error;
pub mod kalman;
pub mod linalg;
pub mod seeding;

pub use error::{Error, Result};
