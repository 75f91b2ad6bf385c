use std::process::ExitCode;

use calref::cli::{run, SEED_ENV};

fn main() -> ExitCode {
    let code = run(
        std::env::args_os(),
        std::env::var(SEED_ENV).ok(),
        &mut std::io::stdout().lock(),
        &mut std::io::stderr().lock(),
    );
    ExitCode::from(code)
}
