fn main() {
    std::process::exit(tinypy_cli::run(std::env::args_os()));
}
