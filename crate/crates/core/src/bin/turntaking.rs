fn main() {
    std::process::exit(turntaking::cli::run_command(std::env::args_os()));
}
