use clap::Parser;

use fnl::cli::{execute, render_error, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FNL_LOG", "warn")).init();
    let cli = Cli::parse();
    let code = match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{}", render_error(&e));
            1
        }
    };
    std::process::exit(code);
}
