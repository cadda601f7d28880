use std::process::ExitCode;

fn main() -> ExitCode {
    ccfmap::cli::main_with_args(std::env::args_os())
}
