//! Batch driver: run configuration, on-disk formats, and the pipeline stages
//! behind the command line.

pub mod config;
pub mod formats;
pub mod pipeline;
