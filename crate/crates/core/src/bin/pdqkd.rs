use clap::Parser;
use pdqkd::cli::{run, Cli, CliError};

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli).map_err(anyhow::Error::from) {
        eprintln!("error: {err:#}");
        let code = err.downcast_ref::<CliError>().map_or(1, CliError::exit_code);
        std::process::exit(code);
    }
}
