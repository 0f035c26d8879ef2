fn main() {
    pbforecast_cli::logging::init();
    std::process::exit(pbforecast_cli::main_with_args(std::env::args_os()));
}
