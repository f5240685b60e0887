use clap::Parser;
use pobs_cli::app::{run, Cli};
use pobs_cli::{exit_code, THREADS_ENV};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    log::warn!("could not size the thread pool: {e}");
                }
            }
            _ => {
                eprintln!("error: {THREADS_ENV} = `{v}` is not a positive integer");
                std::process::exit(pobs_cli::EXIT_INVALID);
            }
        }
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            std::process::exit(pobs_cli::EXIT_INVALID);
        }
        Err(e) => e.exit(),
    };
    let code = match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    };
    std::process::exit(code);
}
