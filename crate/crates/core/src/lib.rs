//! Distills tree ensembles into short rule lists that partition the
//! training data, chosen by an exact set-partitioning integer program.

pub mod error;
pub mod fidelity;
pub mod forest;
mod grow;
pub mod io;
pub mod model;
pub mod pipeline;
pub mod preprocess;
pub mod solver;
pub mod temporal;

pub use error::{Error, Result};
