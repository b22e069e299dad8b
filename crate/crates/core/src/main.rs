fn main() {
    std::process::exit(matchtrack::cli::run_cli(std::env::args().collect()));
}
