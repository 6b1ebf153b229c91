fn main() {
    std::process::exit(isac_drt::cli::run(std::env::args_os()));
}
