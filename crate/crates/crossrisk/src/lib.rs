//! File formats, source loading, synthetic markets, text providers,
//! configuration and the command line around `crossrisk-core`.

pub mod cli;
pub mod config;
pub mod formats;
pub mod ingest;
pub mod provider;
pub mod report;
pub mod runner;
pub mod scenario;
pub mod synthetic;

pub use crossrisk_core as core;
