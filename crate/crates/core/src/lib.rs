pub mod analysis;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod format;
pub mod mechanisms;
pub mod model;
pub mod scenario;
pub mod solver;

pub use error::{Error, Result};
