fn main() {
    std::process::exit(alcore::cli::main_with_args(std::env::args_os()));
}
