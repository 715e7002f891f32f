use clap::Parser;
use lesionbench_cli::{run, Cli, Status};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let code = match run(Cli::parse()) {
        Ok(Status::Ok) => lesionbench_cli::EXIT_OK,
        Ok(status @ Status::Partial(n)) => {
            eprintln!("warning: {n} case evaluation(s) failed; see the log above");
            status.exit_code()
        }
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            f.exit_code()
        }
    };
    std::process::exit(code);
}
