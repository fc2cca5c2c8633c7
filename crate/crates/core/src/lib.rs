pub mod checkpoint;
pub mod data;
pub mod encoder;
pub mod error;
pub mod flow;
pub mod metrics;
pub mod plot;
pub mod model;
pub mod synthetic;
pub mod train;

pub use error::{ProfitiError, Result};
