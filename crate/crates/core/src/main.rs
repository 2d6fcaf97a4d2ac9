fn main() {
    std::process::exit(hotspot::cli::main_with_args(std::env::args_os()));
}
