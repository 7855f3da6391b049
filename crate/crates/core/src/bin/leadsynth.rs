fn main() {
    std::process::exit(leadsynth::cli::main_with_args(std::env::args_os()));
}
