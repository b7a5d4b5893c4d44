use std::process::ExitCode;

use clap::Parser;
use readmit::cli::Cli;
use readmit::commands;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli.data_dir, &cli.command) {
        Ok(manifests) => {
            for m in manifests {
                for p in &m.outputs {
                    println!("{}", p.display());
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
