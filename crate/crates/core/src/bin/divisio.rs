fn main() {
    std::process::exit(divisio::cli::main_with_args(std::env::args_os()));
}
