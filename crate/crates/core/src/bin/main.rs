use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(splat_uncert::cli::cli_main(std::env::args()) as u8)
}
