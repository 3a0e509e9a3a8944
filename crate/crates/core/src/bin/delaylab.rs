fn main() {
    std::process::exit(delaylab::cli::main_with_args(std::env::args_os()));
}
