use clap::Parser;

use npiv_cli::args::Cli;

fn main() {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = npiv_cli::run(&cli);
    if let Err(e) = &result {
        eprintln!("error: {e}");
    }
    std::process::exit(npiv_cli::exit_code(&result));
}
