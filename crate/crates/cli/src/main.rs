fn main() {
    std::process::exit(mcsr_cli::run(std::env::args_os()));
}
