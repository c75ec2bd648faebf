fn main() {
    std::process::exit(beatdet::cli::run(std::env::args_os()));
}
