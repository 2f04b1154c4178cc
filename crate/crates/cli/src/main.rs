use clap::Parser;
use isaacs_vex_cli::{run, Cli};

fn main() {
    std::process::exit(run(Cli::parse()));
}
