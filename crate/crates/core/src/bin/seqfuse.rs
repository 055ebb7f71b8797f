use clap::Parser;
use seqfuse::cli::{resolve_config, run, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result =
        resolve_config(cli.config.as_deref(), &cli.set).and_then(|cfg| run(cli.command, &cfg));
    match result {
        Ok(summary) => println!("{summary}"),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
