use clap::Parser;

use nbsc_core::cli::{run, Cli};

fn main() {
    std::process::exit(run(Cli::parse()));
}
