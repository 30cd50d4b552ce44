use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("G4D_LOG", "warn")).init();
    let cli = g4d_cli::args::Cli::parse();
    std::process::exit(g4d_cli::commands::execute(cli));
}
