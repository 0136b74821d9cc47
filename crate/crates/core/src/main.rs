fn main() {
    std::process::exit(edac_core::cli::run(std::env::args_os()));
}
