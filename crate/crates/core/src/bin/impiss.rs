fn main() {
    std::process::exit(impulsive_iss::cli::run(std::env::args_os()));
}
