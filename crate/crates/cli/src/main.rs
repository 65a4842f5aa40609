use std::process::ExitCode;

use clap::Parser;
use robcert_cli::{exit, Cli, RunOptions};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let args = cli.command.args();
    if let Some(threads) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: cannot start {threads} worker threads: {e}");
            return ExitCode::from(exit::RUNTIME_ERROR);
        }
    }
    let opts = RunOptions::from_args(cli.command.name(), args);
    match robcert_cli::execute(&opts) {
        Ok(summary) => {
            for line in &summary.lines {
                println!("{line}");
            }
            for w in &summary.warnings {
                eprintln!("warning: {w}");
            }
            println!("wrote {}", summary.json_path.display());
            ExitCode::from(summary.exit_code)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
