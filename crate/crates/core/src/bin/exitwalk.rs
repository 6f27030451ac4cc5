fn main() {
    std::process::exit(exitwalk::cli::main_with_args(std::env::args_os()));
}
