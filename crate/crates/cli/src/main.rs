use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(emoforge_cli::run(std::env::args_os()))
}
