fn main() {
    std::process::exit(gridmrf_cli::main_with_args(std::env::args_os()));
}
