//! Command-line front end: training, transfer, evaluation and ablation runs,
//! each recorded by a manifest written before any other output.

pub mod commands;
pub mod manifest;
pub mod pipeline;

pub use commands::{cmd_ablate, cmd_evaluate, cmd_synth, cmd_train, cmd_transfer, exit_code, Cli, Command};
pub use manifest::RunManifest;
