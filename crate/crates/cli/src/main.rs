fn main() {
    std::process::exit(qbcharge_cli::run(std::env::args_os()));
}
