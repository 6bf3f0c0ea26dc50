use clap::Parser;
use ranslice_cli::Cli;

fn main() {
    env_logger::Builder::from_env(
        env_logger::Env::new().filter_or("RANSLICE_LOG", "info"),
    )
    .format_timestamp(None)
    .init();

    let cli = Cli::parse();
    if let Err(e) = cli.command.execute() {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
