fn main() {
    std::process::exit(mpoverify::cli::main_with_args(std::env::args_os()));
}
