use clap::Parser;

fn main() {
    let cli = abduct_cli::Cli::parse();
    if let Err(e) = abduct_cli::run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
