fn main() {
    std::process::exit(tistop::cli::main_with_args(std::env::args_os()));
}
