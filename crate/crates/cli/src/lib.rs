//! Library surface of the `ltrj` command-line tool: configuration handling,
//! the checkpoint file format, and the subcommand implementations. The binary
//! in `main.rs` is a thin argument parser over these.

pub mod ckpt;
pub mod commands;
pub mod config;
pub mod error;

pub use error::{CliError, CliResult};
