fn main() -> std::process::ExitCode {
    vlcp_cli::main_with_args(std::env::args_os())
}
