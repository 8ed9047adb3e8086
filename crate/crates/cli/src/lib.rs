//! Library surface of the `oodmon` command-line tool: the config format,
//! diagnostics, and the command implementations. The binary in `main.rs` is
//! a thin argument-parsing shell around [`commands`].

pub mod commands;
pub mod config;
pub mod diag;

pub use commands::{
    cmd_evaluate, cmd_generate_ood, cmd_list, cmd_optimize, cmd_parse, CommandError, CommandResult,
};
pub use config::{load_config, Overrides, RunConfig};
pub use diag::Diagnostic;
