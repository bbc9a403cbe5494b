//! Orchestration: configuration, in-memory stages and the file-based
//! commands behind the CLI.

mod commands;
mod config;
mod stages;

pub use commands::*;
pub use config::{parse_blocks, LossKind, PipelineConfig};
pub use stages::*;
