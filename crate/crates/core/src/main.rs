fn main() {
    std::process::exit(xecrel::cli::run(std::env::args_os()));
}
