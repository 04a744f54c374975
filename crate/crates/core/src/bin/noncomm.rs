fn main() {
    std::process::exit(noncomm::experiments::cli::run(std::env::args_os()));
}
