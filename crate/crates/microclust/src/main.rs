fn main() {
    std::process::exit(microclust::cli::main_with_args(std::env::args_os()));
}
