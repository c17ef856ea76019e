fn main() {
    std::process::exit(vbssl::cli::run(std::env::args_os()));
}
