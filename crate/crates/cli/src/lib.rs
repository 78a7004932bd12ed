//! The `hypersoc` pipeline commands, usable as a library by tests and scripts.

pub mod artifacts;
pub mod commands;
pub mod config;

use anyhow::Result;

pub use commands::{Ctx, GradCheckFailed};
pub use config::{Overrides, RunConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Ingest,
    Enhance,
    Embed,
    Build,
    Train,
    Eval,
    Ablate,
    Sweep,
    Stats,
    Gradcheck,
}

impl Command {
    /// The offline end-to-end sequence.
    pub const PIPELINE: [Command; 7] = [
        Command::Ingest,
        Command::Enhance,
        Command::Embed,
        Command::Build,
        Command::Train,
        Command::Eval,
        Command::Stats,
    ];
}

pub fn run(command: Command, cfg: RunConfig) -> Result<String> {
    let ctx = Ctx::new(cfg);
    match command {
        Command::Ingest => commands::ingest(&ctx),
        Command::Enhance => commands::enhance(&ctx),
        Command::Embed => commands::embed_cmd(&ctx),
        Command::Build => commands::build(&ctx),
        Command::Train => commands::train_cmd(&ctx),
        Command::Eval => commands::eval_cmd(&ctx),
        Command::Ablate => commands::ablate(&ctx),
        Command::Sweep => commands::sweep(&ctx),
        Command::Stats => commands::stats(&ctx),
        Command::Gradcheck => commands::gradcheck(&ctx),
    }
}
