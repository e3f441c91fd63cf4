pub mod cli;
pub mod dynamics;
pub mod equilibria;
pub mod error;
pub mod fitness;
pub mod formulas;
pub mod kinship;
pub mod montecarlo;
pub mod quadrature;
pub mod rng;

pub use error::{Error, Result};
