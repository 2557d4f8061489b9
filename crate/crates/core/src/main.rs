fn main() {
    std::process::exit(labelgcn_core::cli::run(std::env::args_os()));
}
