use clap::Parser;

fn main() {
    env_logger::init();
    let cli = p2hsched::cli::Cli::parse();
    std::process::exit(p2hsched::cli::run(cli));
}
