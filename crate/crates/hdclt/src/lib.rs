//! Parallel experiment drivers, file formats and the `hdclt` command line on
//! top of [`hdclt_core`].

pub mod checks;
pub mod cli;
pub mod coverage;
pub mod error;
pub mod experiments;
pub mod io;
pub mod manifest;
pub mod mc;
pub mod parallel;

pub use error::{AppError, AppResult};
pub use hdclt_core;
