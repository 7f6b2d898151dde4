use clap::Parser;
use clonekit_cli::{run, Cli, Defaults, Status};

fn main() {
    let cli = Cli::parse();
    let defaults = match Defaults::from_env() {
        Ok(d) => d,
        Err(e) => {
            eprintln!("CLONEKIT_DEFAULTS: {e}");
            std::process::exit(Status::InputError.code());
        }
    };
    let text = cli.text;
    let report = run(cli, &defaults);
    if text {
        print!("{}", report.to_text());
    } else {
        print!("{}", report.to_lines());
    }
    std::process::exit(report.status().unwrap_or(Status::InputError.code()));
}
