use clap::Parser;
use env_logger::Env;
use vam_intent_cli::Cli;

fn main() {
    env_logger::Builder::from_env(Env::new().filter_or("VAM_INTENT_LOG", "warn")).init();
    if let Err(e) = vam_intent_cli::run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
