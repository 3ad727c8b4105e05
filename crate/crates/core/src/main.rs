fn main() {
    std::process::exit(expfam::cli::main_with_args(std::env::args_os()));
}
