fn main() {
    std::process::exit(seqvad::cli::main_with_args(std::env::args_os()));
}
