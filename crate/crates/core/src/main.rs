fn main() {
    std::process::exit(srf_core::cli::run(std::env::args_os()));
}
