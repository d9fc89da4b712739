fn main() {
    std::process::exit(flexmc::cli::run_from_env());
}
