use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(rrn::cli::run(std::env::args_os()))
}
