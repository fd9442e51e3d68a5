use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(imc_hit::run_cli(std::env::args_os()))
}
