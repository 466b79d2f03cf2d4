use clap::Parser;
use headland_cli::commands::{run, Cli, EXIT_INPUT_ERROR};

fn main() {
    let cli = Cli::parse();
    let code = match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_INPUT_ERROR
        }
    };
    std::process::exit(code);
}
