use clap::Parser;
use ductwave::cli::{main_with, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    std::process::exit(main_with(Cli::parse()));
}
