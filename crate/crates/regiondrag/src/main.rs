fn main() {
    std::process::exit(regiondrag::cli::run(std::env::args_os()));
}
