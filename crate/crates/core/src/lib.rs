//! Fluorescence statistics of two dipole-interacting V-type three-level atoms
//! showing macroscopic quantum jumps (dark, single and double intensity periods).
//!
//! Units: the strong-transition Einstein coefficient `a3` sets the rate unit,
//! times are in `1/a3`, distances in the 3-1 transition wavelength.

pub mod analytic_rates;
pub mod atomic_model;
pub mod bloch_engine;
pub mod cli_sweep;
pub mod error;
pub mod telegraph_stats;
pub mod trajectory_sim;

pub use error::{Error, Result};
