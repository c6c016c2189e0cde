//! Benchmark driver for the two-level domain decomposition preconditioners:
//! Monte-Carlo studies, operator-deviation and spectral verification,
//! CSV/SVG reporting, and the command-line front end.

pub mod cli;
pub mod config;
pub mod csv;
pub mod experiment;
pub mod stats;
pub mod svg;

pub use cli::cli_main;
