use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(spnorm_cli::run(std::env::args_os().collect()))
}
