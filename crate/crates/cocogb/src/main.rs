fn main() {
    std::process::exit(cocogb::cli::run(std::env::args_os()));
}
