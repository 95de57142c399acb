use std::io::Write;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use elcpd_cli::{execute, Cli, CliError};

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(2);
        }
    };
    let format = cli.format;
    match execute(cli, args[1..].to_vec()) {
        Ok(out) => {
            for w in &out.report.warnings {
                eprintln!("warning: {w}");
            }
            let mut stdout = std::io::stdout().lock();
            let _ = stdout.write_all(out.render(format).as_bytes());
            ExitCode::SUCCESS
        }
        Err(e) => report_error(e),
    }
}

fn report_error(e: CliError) -> ExitCode {
    eprintln!("error: {e}");
    e.into()
}
