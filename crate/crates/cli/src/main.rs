fn main() {
    std::process::exit(hjvar_cli::run_command(std::env::args_os()));
}
