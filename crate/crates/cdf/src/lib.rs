//! Filesystem, configuration and command-line layer over `cdf-core`:
//! panel CSVs and fleet directories, JSON model bundles, TOML run
//! configuration, a thread-pool experiment harness and the `cdf-cold`
//! binary.

pub mod cli;
pub mod config;
pub mod harness;
pub mod io;

pub use cdf_core as core;
