fn main() {
    std::process::exit(auxkc::cli::main_with_args(std::env::args_os()));
}
