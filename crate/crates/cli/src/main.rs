use clap::Parser;
use pam_cli::commands::{run, Cli};
use pam_cli::error::{CliError, EXIT_CONFIG};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        pool = pool.num_threads(n);
    }
    let code = match pool.build() {
        Ok(pool) => match pool.install(|| run(&cli)) {
            Ok(code) => code,
            Err(e) => report(&e),
        },
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            EXIT_CONFIG
        }
    };
    std::process::exit(code);
}

fn report(e: &CliError) -> i32 {
    eprintln!("error: {e}");
    let mut src = std::error::Error::source(e);
    while let Some(s) = src {
        eprintln!("  caused by: {s}");
        src = s.source();
    }
    e.exit_code()
}
