//! Robust pricing and superhedging of American options on finite scenario
//! lattices under volatility uncertainty and static option calibration.

pub mod error;
pub mod lattice;
pub mod lp;
pub mod measures;
pub mod stopping;
pub mod payoff;
pub mod joint;
pub mod solvers;
pub mod gap_demo;
pub mod instances;
pub mod pathwise;
pub mod scenario;

pub use error::{Error, Result};
