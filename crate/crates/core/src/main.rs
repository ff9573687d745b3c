fn main() {
    std::process::exit(a2c::cli::run_command(std::env::args_os()));
}
