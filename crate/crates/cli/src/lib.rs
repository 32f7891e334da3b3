//! Data ingestion, synthetic-panel generation, configuration, and the
//! command-line surface.

pub mod commands;
pub mod config;
pub mod io;
pub mod synth;

pub use commands::{run, Cli};
