fn main() {
    std::process::exit(branchlaw_core::cli::run(std::env::args_os()));
}
