use clap::Parser;

use lungnet_cli::args::Cli;
use lungnet_cli::commands;

fn main() {
    let cli = Cli::parse();
    if let Err(e) = commands::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
