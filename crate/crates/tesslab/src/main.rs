fn main() {
    std::process::exit(tesslab::cli::main_with_args(std::env::args_os()));
}
