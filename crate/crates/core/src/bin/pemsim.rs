fn main() {
    std::process::exit(pemsim::cli::main_from(std::env::args_os()));
}
