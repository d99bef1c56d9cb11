fn main() {
    std::process::exit(llanet::cli::main_with_args(std::env::args_os()));
}
