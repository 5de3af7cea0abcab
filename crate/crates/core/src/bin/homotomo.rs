fn main() {
    std::process::exit(homotomo::cli::main_with(std::env::args_os()));
}
