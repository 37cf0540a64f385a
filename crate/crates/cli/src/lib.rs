//! Experiment orchestration for the resolvent laboratory: configuration,
//! deterministic sweeps, and CSV emission.

pub mod config;
pub mod csv;
pub mod experiments;

pub use config::Config;
pub use csv::{emit_csv, CsvTable};
