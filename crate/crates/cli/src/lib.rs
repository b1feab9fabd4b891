//! Command-line entry points and the annotation service of the FLIM toolkit.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod service;

pub use config::PipelineConfig;
