fn main() {
    std::process::exit(slowlight_cli::run_cli(std::env::args_os()));
}
