fn main() {
    std::process::exit(cpql_cli::run(std::env::args_os()));
}
