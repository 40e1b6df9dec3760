use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use evgaze_cli::{execute, threads_from_env, Cli, THREADS_ENV};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = threads_from_env(std::env::var(THREADS_ENV).ok().as_deref());
    let result = threads.and_then(|n| {
        if let Some(n) = n {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .expect("global pool is configured once");
        }
        execute(&cli)
    });
    match result {
        Ok(out) => {
            print!("{}", out.stdout);
            std::io::stdout().flush().ok();
            ExitCode::from(out.code)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
