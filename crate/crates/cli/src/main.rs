use std::process::ExitCode;

use clap::Parser;
use qa_cli::Cli;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match qa_cli::run(&cli) {
        Ok(report) => {
            for line in &report.summary {
                println!("{line}");
            }
            println!("wrote {}", report.out_dir.join("manifest.json").display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("qa: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
