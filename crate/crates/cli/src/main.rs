use std::process::ExitCode;

use clap::Parser;

use sbmap_cli::{execute, preset_table, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.list_presets {
        print!("{}", preset_table());
        return ExitCode::SUCCESS;
    }
    match execute(&cli) {
        Ok(runs) => {
            for r in runs {
                println!("{}: {}", r.dir.display(), r.message);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("sbmap: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
