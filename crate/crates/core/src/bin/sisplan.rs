fn main() {
    std::process::exit(sisplan::harness::cli::run(std::env::args_os()));
}
