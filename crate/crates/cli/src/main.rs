use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(convdiag_cli::run(std::env::args_os()))
}
