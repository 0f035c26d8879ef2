//! Command-line workflow and JSON service over the `pbforecast` library.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod forecast;
pub mod logging;
pub mod service;
pub mod workspace;

use clap::Parser;

use args::{Cli, Command};
use config::Settings;
use error::{CliError, CliResult};
use workspace::Workspace;

/// Parses arguments, runs the command and returns the process exit code.
/// Results go to stdout; errors go to stderr as JSON.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { error::ErrorKind::Usage.exit_code() } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(out) => {
            print!("{out}");
            0
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.kind.exit_code()
        }
    }
}

fn execute(cli: Cli) -> CliResult<String> {
    let settings = Settings::resolve(cli.global.overrides())?;
    let ws = Workspace::open(settings)?;
    match &cli.command {
        Command::Serve(a) => {
            let addr = a.addr.clone().unwrap_or_else(|| ws.settings.server_addr.clone());
            let state = service::AppState::load(ws)?;
            let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::new(error::ErrorKind::Internal, e.to_string()))?;
            rt.block_on(service::serve(state, &addr))?;
            Ok(String::new())
        }
        command => Ok(commands::run(&ws, command)?.render()),
    }
}
