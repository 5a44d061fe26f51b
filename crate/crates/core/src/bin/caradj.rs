fn main() {
    std::process::exit(caradj::cli::run(std::env::args_os()));
}
