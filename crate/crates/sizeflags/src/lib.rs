//! File formats, configuration and pipelines behind the `sizeflags` binary.

pub mod config;
pub mod error;
pub mod formats;
pub mod pipeline;
