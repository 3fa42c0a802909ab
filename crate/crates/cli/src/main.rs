fn main() {
    std::process::exit(resonator_cli::main_with(std::env::args_os()));
}
