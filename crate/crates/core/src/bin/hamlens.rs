use clap::Parser;
use hamlens::cli::{main_with, Cli};

fn main() {
    let code = match Cli::try_parse() {
        Ok(cli) => main_with(cli),
        Err(e) => {
            let _ = e.print();
            // exit code 2 is reserved for threshold failures
            i32::from(e.use_stderr())
        }
    };
    std::process::exit(code);
}
