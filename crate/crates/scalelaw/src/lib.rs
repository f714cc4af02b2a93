//! File formats, plots and the command-line tool around `scalelaw-core`.
//!
//! - [`io`]: experiment CSV/JSON ingestion and export, model and registry files.
//! - [`config`]: the JSON run configuration and seed overrides.
//! - [`manifest`]: atomic writes and run manifests.
//! - [`svg`]: accuracy and threshold-sweep charts.
//! - [`cli`]: the `scalelaw` subcommands.

#![forbid(unsafe_code)]

pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod manifest;
pub mod svg;

pub use error::{Error, Result};
