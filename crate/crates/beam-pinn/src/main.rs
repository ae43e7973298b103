use beam_pinn::cli::{run, Cli};
use clap::Parser;

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
