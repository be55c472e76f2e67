fn main() {
    std::process::exit(biharmonic_lab::cli::main_with_args(std::env::args_os()));
}
