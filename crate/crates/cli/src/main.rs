fn main() {
    std::process::exit(bdris_cli::run(std::env::args_os()));
}
