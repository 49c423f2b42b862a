//! File formats, configuration and the command-line front end for the
//! `microclust-core` experiments.

pub mod cli;
pub mod commands;
pub mod error;
pub mod freq;
pub mod grid;
pub mod manifest;

pub use error::{CliError, Result};
