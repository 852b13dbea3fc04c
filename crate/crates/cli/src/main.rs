fn main() {
    std::process::exit(compsum_cli::run(std::env::args_os()));
}
