fn main() {
    std::process::exit(brainvox::cli::main(std::env::args_os()));
}
