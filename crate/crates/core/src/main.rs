fn main() {
    std::process::exit(pcgrbm_core::cli::run(std::env::args_os()));
}
