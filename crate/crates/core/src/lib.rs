pub mod checks;
pub mod config;
pub mod drifts;
pub mod elemint;
pub mod error;
pub mod gluing;
pub mod paths;
pub mod report;
pub mod scenario;
pub mod verify;

pub use error::{Error, Result};
