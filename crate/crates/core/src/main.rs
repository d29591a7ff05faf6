fn main() {
    std::process::exit(lippmann::cli::run(std::env::args_os()));
}
