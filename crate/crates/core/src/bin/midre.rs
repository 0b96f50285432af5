use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(midre::cli::run(std::env::args_os()))
}
