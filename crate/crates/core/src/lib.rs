pub mod domains;
pub mod error;
pub mod harness;
pub mod ials;
pub mod model;
pub mod neural;
pub mod planner;
pub mod pomcp;
pub mod predictor;
pub mod selector;

pub use error::{Error, Result};
