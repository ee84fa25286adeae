use clap::Parser;
use kclg_cli::{run, Cli, EXIT_CONFIG, EXIT_OK};

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            std::process::exit(if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK });
        }
    };
    std::process::exit(run(&cli));
}
