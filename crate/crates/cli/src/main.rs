fn main() -> std::process::ExitCode {
    certens_cli::exit_code(certens_cli::cli_main(std::env::args_os()))
}
