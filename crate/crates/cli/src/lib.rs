//! Configuration, orchestration and file output for the command-line tool.

pub mod commands;
pub mod config;
pub mod output;
