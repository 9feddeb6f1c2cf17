use clap::Parser;
use convex_ito::cli::{execute, Cli};

fn main() {
    std::process::exit(execute(Cli::parse()));
}
