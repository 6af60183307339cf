//! Orchestration of the offline and online phases, report writing and the
//! command-line front end.

pub mod cli;
pub mod commands;
pub mod config;
pub mod pipeline;
pub mod report;

pub use config::{Extractor, RunConfig};
pub use pipeline::{evaluate, run_query, Evaluation, PipelineParams, QueryInput, TileDatabase};
pub use report::{StageTiming, StorageReport, TIMING_HEADER};
