use clap::Parser;

fn main() {
    let cli = hypergam::cli::Cli::parse();
    if let Err(e) = hypergam::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
