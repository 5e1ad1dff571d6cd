use clap::Parser;

fn main() {
    let cli = cgtopo_cli::Cli::parse();
    if let Err(e) = cgtopo_cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.code);
    }
}
