use std::process::ExitCode;

use gridsynth::cli;

fn main() -> ExitCode {
    let code = std::panic::catch_unwind(|| cli::run(std::env::args_os(), |k| std::env::var(k).ok()))
        .unwrap_or(cli::EXIT_INTERNAL);
    ExitCode::from(code as u8)
}
