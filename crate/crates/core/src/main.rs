fn main() {
    std::process::exit(laros::cli::run(std::env::args_os()));
}
