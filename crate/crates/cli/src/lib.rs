//! Command-line pipelines: configuration, file formats and commands.

pub mod commands;
pub mod config;
pub mod io;
pub mod llm;
