fn main() {
    std::process::exit(hnswlab::cli::run(std::env::args_os()));
}
