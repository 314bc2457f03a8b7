fn main() {
    std::process::exit(stepsql::cli::run(std::env::args_os()));
}
