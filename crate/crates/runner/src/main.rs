use std::io;

use clap::Parser;
use gdt_runner::cli::{execute, Cli, Io};

fn main() {
    let cli = Cli::parse();
    let stdin = io::stdin();
    let code = execute(
        cli,
        Io {
            input: stdin.lock(),
            out: &mut io::stdout(),
            err: &mut io::stderr(),
        },
    );
    std::process::exit(code);
}
