fn main() {
    std::process::exit(mvlab_cli::main_with_args(std::env::args_os()));
}
