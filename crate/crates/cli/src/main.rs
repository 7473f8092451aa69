use std::process::ExitCode;

fn main() -> ExitCode {
    mlrpca_cli::main_with(std::env::args_os())
}
