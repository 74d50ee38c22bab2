use std::process::ExitCode;

fn main() -> ExitCode {
    kuht::cli::main_with_args(std::env::args_os())
}
