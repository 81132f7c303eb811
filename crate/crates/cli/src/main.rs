fn main() {
    std::process::exit(dualcoord_cli::run_cli(std::env::args_os()));
}
