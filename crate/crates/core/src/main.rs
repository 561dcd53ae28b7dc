fn main() {
    std::process::exit(wlra::cli::run_cli(std::env::args_os()));
}
