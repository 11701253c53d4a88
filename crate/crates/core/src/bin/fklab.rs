fn main() {
    std::process::exit(fklab::cli::main_with_args(std::env::args_os()));
}
