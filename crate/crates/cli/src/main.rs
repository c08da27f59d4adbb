use clap::Parser;

fn main() {
    let cli = dirng_cli::Cli::parse();
    std::process::exit(dirng_cli::run(&cli));
}
