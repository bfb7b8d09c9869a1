fn main() {
    std::process::exit(hintrank_cli::run(std::env::args_os()));
}
