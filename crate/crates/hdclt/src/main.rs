use clap::Parser;
use hdclt::cli::{execute, Cli};

fn main() {
    std::process::exit(execute(Cli::parse()));
}
