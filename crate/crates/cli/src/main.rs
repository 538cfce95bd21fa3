use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use tcpp_cli::{run, Cli, MAX_ENUM_VAR};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let max_enum = std::env::var(MAX_ENUM_VAR).ok();
    let out = run(&cli, max_enum.as_deref());
    print!("{}", out.stdout);
    eprint!("{}", out.stderr);
    let _ = std::io::stdout().flush();
    ExitCode::from(out.code as u8)
}
