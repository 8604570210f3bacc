use clap::Parser;
use finsler_cli::commands::{run, Cli};

fn main() {
    std::process::exit(run(Cli::parse()));
}
