fn main() -> std::process::ExitCode {
    marginforge::cli::main_with_args(std::env::args_os())
}
