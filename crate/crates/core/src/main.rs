fn main() {
    std::process::exit(proxrec::cli::run(std::env::args_os()));
}
