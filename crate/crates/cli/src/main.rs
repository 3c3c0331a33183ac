fn main() {
    std::process::exit(interrupt_cli::run(std::env::args_os()));
}
