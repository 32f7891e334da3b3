use clap::Parser;

fn main() {
    let cli = ndcfair_cli::Cli::parse();
    std::process::exit(ndcfair_cli::run(cli));
}
