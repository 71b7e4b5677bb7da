use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(modlab::cli::run(std::env::args()))
}
