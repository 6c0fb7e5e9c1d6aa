//! Command-line harness around `flare-core`: synthetic data generation,
//! labeling, evaluation, training and gradient checks.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;

use std::io::Write;

pub use args::{Cli, Command};
pub use config::RunConfig;
pub use error::{CliError, CliResult};

/// Runs one parsed command. `env` supplies the `FLARE_*` overrides.
pub fn run(cli: Cli, env: Vec<(String, String)>, out: &mut dyn Write) -> CliResult<()> {
    match cli.command {
        Command::GenData(a) => commands::gen_data(&a, out),
        Command::Label(a) => commands::label(&a, out),
        Command::Eval(a) => commands::eval(&a, out),
        Command::Train(a) => commands::train_cmd(&a, env, out),
        Command::Gradcheck(a) => commands::gradcheck(&a, out),
    }
}
