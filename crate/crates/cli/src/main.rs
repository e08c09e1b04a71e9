use clap::Parser;
use mcp_cli::{run_experiment, Cli, Request};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = Request::from_cli(&cli).and_then(|req| run_experiment(&req)) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
