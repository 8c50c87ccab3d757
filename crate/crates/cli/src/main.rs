fn main() {
    std::process::exit(dualoie_cli::run(std::env::args_os()));
}
