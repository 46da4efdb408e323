fn main() {
    std::process::exit(evscan_cli::main_with(std::env::args_os()));
}
