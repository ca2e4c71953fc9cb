use clap::Parser;
use focal_cli::{run, Cli};

fn main() {
    std::process::exit(run(Cli::parse()));
}
