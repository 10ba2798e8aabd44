fn main() {
    std::process::exit(chanrep::cli::run(std::env::args_os()));
}
