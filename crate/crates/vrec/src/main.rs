use clap::Parser;

use vrec::cli::{exit_code_for, run, Cli, EXIT_USAGE};

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version requests exit cleanly; everything else is a
            // usage error
            if e.use_stderr() {
                let _ = e.print();
                std::process::exit(EXIT_USAGE);
            }
            let _ = e.print();
            std::process::exit(0);
        }
    };
    if let Err(e) = run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(exit_code_for(&e));
    }
}
