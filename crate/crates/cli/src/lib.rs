//! Configuration, pipeline orchestration and file formats around
//! `inertia-core`.

pub mod config;
pub mod error;
pub mod output;
pub mod pipeline;

pub use config::Config;
pub use error::CliError;
pub use pipeline::{emit_comparison, run_pipeline, PipelineOptions, PipelineRun, RunReport, Stages};
