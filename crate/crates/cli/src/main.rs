use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = tntm_cli::Cli::parse();
    if let Err(e) = tntm_cli::run(cli) {
        eprintln!("{}", e.line());
        std::process::exit(e.exit_code());
    }
}
