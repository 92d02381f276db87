fn main() {
    std::process::exit(promptrank::cli::main_with_args(std::env::args_os()));
}
