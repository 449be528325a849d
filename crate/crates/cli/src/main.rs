fn main() {
    std::process::exit(hsic_cli::main_with_args(std::env::args_os()));
}
