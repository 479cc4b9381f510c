use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use mclab_cli::{run, CliError, Command, RunOptions};

#[derive(Parser, Debug)]
#[command(name = "mclab", version, about = "Critical sets and nodal sets of mean curvature equation solutions")]
struct Args {
    /// solve | critical | nodal | flow | oracle | verify | figure
    #[arg(value_enum)]
    command: Command,
    /// Scenario config (JSON)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    /// Suite id for verify (T3.1, L3.3, R3.4, T4.2, T4.3, T4.4, C4.5)
    #[arg(long)]
    suite: Option<String>,
    /// Override solver.h
    #[arg(long)]
    h: Option<f64>,
    /// Figure id for figure (fig1..fig5)
    #[arg(long)]
    fig: Option<String>,
}

fn report(err: &CliError, out: Option<&PathBuf>) -> ExitCode {
    let json = err.to_json();
    eprintln!("{json}");
    if let Some(dir) = out {
        if std::fs::create_dir_all(dir).is_ok() {
            let _ = std::fs::write(dir.join("error.json"), format!("{:#}\n", json));
        }
    }
    ExitCode::from(err.exit_code() as u8)
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => e.exit(),
        Err(e) => {
            let _ = e.print();
            let err = CliError::Usage {
                message: e.kind().to_string(),
                key: None,
            };
            return report(&err, None);
        }
    };
    let opts = RunOptions {
        command: args.command,
        config: args.config,
        out: args.out,
        suite: args.suite,
        h: args.h,
        fig: args.fig,
    };
    match run(&opts) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => report(&e, Some(&opts.out)),
    }
}
