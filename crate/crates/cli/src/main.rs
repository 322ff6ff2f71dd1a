use clap::Parser;

fn main() {
    let cli = ridematch_cli::Cli::parse();
    if let Err(e) = ridematch_cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(ridematch_cli::exit_code(&e));
    }
}
