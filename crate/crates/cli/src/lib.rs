//! File formats, SVG rendering and the command-line driver for `hardneg-core`.

pub mod commands;
pub mod error;
pub mod io;
pub mod manifest;
pub mod num;
pub mod svg;

use std::ffi::OsString;
use std::io::Write;

use clap::error::ErrorKind;
use clap::Parser;

pub use commands::{run, Cli, Command};
pub use error::{CliError, CliResult};

/// Parses `args` (program name first), runs the command and returns the exit code.
/// Messages go to the given streams.
pub fn main_with_args<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{text}");
                    error::EXIT_OK
                }
                _ => {
                    let _ = write!(stderr, "{text}");
                    error::EXIT_USAGE
                }
            };
        }
    };
    match run(cli.command) {
        Ok(report) => {
            for a in &report.manifest.outputs {
                let _ = writeln!(stdout, "wrote {}", a.path.display());
            }
            let _ = writeln!(stdout, "wrote {}", report.manifest_path.display());
            for n in &report.notes {
                let _ = writeln!(stdout, "{n}");
            }
            error::EXIT_OK
        }
        Err(e) => {
            let _ = writeln!(stderr, "hardneg: {e}");
            e.exit_code()
        }
    }
}
