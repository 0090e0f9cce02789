fn main() {
    std::process::exit(heatlab::cli::main_with_args(std::env::args_os()));
}
