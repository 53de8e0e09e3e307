use clap::Parser;

fn main() {
    let cli = cgnf_cli::Cli::parse();
    if let Err(e) = cgnf_cli::run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
