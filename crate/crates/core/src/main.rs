fn main() {
    std::process::exit(apportion::cli::main_with_args(std::env::args_os()));
}
