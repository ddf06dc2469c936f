fn main() {
    std::process::exit(f2fsec_cli::run(std::env::args_os()));
}
