fn main() {
    std::process::exit(difftrans_cli::run(std::env::args_os()));
}
