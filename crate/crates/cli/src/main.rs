use clap::Parser;

fn main() {
    let cli = harvest_cli::Cli::parse();
    if let Err(e) = harvest_cli::run(cli) {
        eprintln!("{e}");
        std::process::exit(e.exit_code());
    }
}
