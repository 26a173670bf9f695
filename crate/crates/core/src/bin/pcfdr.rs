fn main() {
    std::process::exit(pcfdr::cli::main_with_args(std::env::args_os()));
}
