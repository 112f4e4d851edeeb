pub mod error;
pub mod harness;
pub mod metrics;
pub mod nets;
pub mod numkernel;
pub mod oracle;
pub mod tasks;
pub mod training;

pub use error::{Error, Result};
