pub mod coefficients;
pub mod error;
pub mod frontier;
pub mod objective;
pub mod selection;
pub mod simulator;
pub mod specfun;

pub use error::{Error, Result};
