fn main() {
    std::process::exit(corf::cli::main_with_args(std::env::args_os()));
}
