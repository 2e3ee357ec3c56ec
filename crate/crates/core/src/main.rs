fn main() {
    std::process::exit(febias::cli::run(std::env::args_os()));
}
