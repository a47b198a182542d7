fn main() {
    std::process::exit(qrlob::cli::main_with_args(std::env::args_os()));
}
