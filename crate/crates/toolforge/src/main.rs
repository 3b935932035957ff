fn main() {
    std::process::exit(toolforge::cli::run_cli(std::env::args()));
}
