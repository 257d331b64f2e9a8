//! Beam-domain CIR positioning: channel simulation, attention regressors,
//! scenario routing and evaluation.

pub mod cli;
pub mod error;
pub mod model;
pub mod persist;
pub mod preprocess;
pub mod router;
pub mod scenario;
pub mod sim;
pub mod train;

pub use error::{Error, Result};
pub use scenario::ScenarioId;
