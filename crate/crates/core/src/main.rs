fn main() {
    std::process::exit(deepvar::cli::main_with_args(std::env::args_os()));
}
