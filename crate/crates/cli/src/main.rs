fn main() {
    std::process::exit(tracereg_cli::run_from_args(std::env::args_os()));
}
