//! Command-line front end for the ASIM stack. Each subcommand is a plain
//! function writing its human-readable output to a caller-supplied sink,
//! so tests drive them without spawning processes.

pub mod args;
pub mod attention;
pub mod commands;
pub mod files;
pub mod settings;

use std::io::Write;

use anyhow::Result;

pub use args::{Cli, Command};

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Preprocess(a) => commands::preprocess(a, out).map(drop),
        Command::Train(a) => commands::train(a, out).map(drop),
        Command::Ablation(a) => commands::ablation(a, out).map(drop),
        Command::Eval(a) => commands::eval(a, out).map(drop),
        Command::Predict(a) => commands::predict(a, out).map(drop),
        Command::ExportAttention(a) => commands::export_attention(a, out).map(drop),
        Command::Embed(c) => commands::embed(c, out),
        Command::Synth(a) => commands::synth(a, out),
    }
}
