//! File formats, run directories and the command implementations behind the
//! `subtask` binary.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod formats;

pub use config::Config;
pub use error::{AppError, Result};
