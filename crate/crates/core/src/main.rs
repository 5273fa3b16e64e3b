fn main() {
    std::process::exit(volforms::cli::run(std::env::args_os()));
}
