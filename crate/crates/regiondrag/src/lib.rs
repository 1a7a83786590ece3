//! File formats, image IO, the benchmark runner, the CLI and the HTTP service
//! around [`regiondrag_core`].

pub mod backends;
pub mod cli;
pub mod dataset;
pub mod edit;
mod error;
pub mod formats;
pub mod imageio;
pub mod runner;
pub mod service;

pub use crate::error::{AppError, ErrorClass, Result};
pub use regiondrag_core as core;
