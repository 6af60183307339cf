fn main() {
    std::process::exit(aero_vpr::bench::cli::main_with_args(std::env::args_os()));
}
