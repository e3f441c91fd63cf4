fn main() {
    std::process::exit(polylab::cli::run(std::env::args_os()));
}
