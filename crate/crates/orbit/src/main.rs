fn main() {
    std::process::exit(orbit::cli::main_with_args(std::env::args_os()));
}
