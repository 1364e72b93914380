use clap::Parser;

fn main() {
    let cli = npsat::cli::Cli::parse();
    std::process::exit(npsat::cli::run(cli));
}
