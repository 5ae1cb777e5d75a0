use std::process::ExitCode;

fn main() -> ExitCode {
    lightint_core::cli::main_with_args(std::env::args_os())
}
