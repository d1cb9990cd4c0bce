fn main() {
    std::process::exit(haslr::cli::run(std::env::args_os()));
}
