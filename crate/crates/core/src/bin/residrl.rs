fn main() {
    std::process::exit(residrl::cli::run(std::env::args_os()));
}
