fn main() {
    std::process::exit(qsslab::cli::main_with_args(std::env::args_os()));
}
