fn main() -> std::process::ExitCode {
    qpp::cli::main_with_args(std::env::args_os())
}
