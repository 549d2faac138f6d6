mod cli;

use std::process::ExitCode;

use clap::Parser;

use cli::{Cli, Format};

/// Exit codes: 0 success, 1 verification failure, 2 infeasible or bad input.
fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MIXQ_LOG", "warn")).init();
    let cli = Cli::parse();
    let argv: Vec<String> = std::env::args().skip(1).collect();
    match cli::run(&cli, argv) {
        Ok(out) => {
            match cli.format {
                Format::Json => println!("{}", out.report.to_json_line()),
                Format::Table => print!("{}", out.report.to_table()),
            }
            if out.verified {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            let code = match e {
                mixq::Error::FieldOverflow { .. } => 1,
                _ => 2,
            };
            eprintln!("error: {e}");
            ExitCode::from(code)
        }
    }
}
