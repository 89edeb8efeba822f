fn main() {
    std::process::exit(bosebox::cli::main_with_args(std::env::args_os()));
}
