//! Experiment runner: configuration, presets, matrix execution, artifacts
//! and summary tables.

pub mod cache;
pub mod config;
pub mod output;
pub mod presets;
pub mod report;
pub mod run;
