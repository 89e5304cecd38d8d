use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use wavetrain_cli::commands::{cmd_inspect, cmd_run, cmd_verify, EXIT_CONFIG};

#[derive(Parser)]
#[command(name = "wavetrain", version, about = "Spectral and nonlinear stability pipeline for periodic viscous waves")]
struct Cli {
    /// Worker threads; stages run sequentially, so values above 1 are accepted and ignored.
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    jobs: u32,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run pipeline stages and write report.json plus CSV tables.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated subset of profile,spectrum,lowfreq,linear,nonlinear, or "all".
        #[arg(long, default_value = "all")]
        stages: String,
        /// Output directory (overrides the config and WAVETRAIN_OUT).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an acceptance suite: identities, structure, rates or all.
    Verify { suite: String },
    /// Print the summary of an existing report.
    Inspect {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG as u8 } else { 0 });
        }
    };
    let _ = cli.jobs;
    let code = match cli.command {
        Command::Run { config, stages, out } => {
            let r = cmd_run(&config, &stages, out);
            if r.report.is_some() {
                print!("{}", r.message);
            } else {
                eprintln!("{}", r.message);
            }
            r.code
        }
        Command::Verify { suite } => {
            let (code, outcomes, note) = cmd_verify(&suite);
            for o in &outcomes {
                println!("{}", o.line());
            }
            if let Some(n) = note {
                println!("ledger: {n}");
            }
            code
        }
        Command::Inspect { config, out } => match cmd_inspect(config.as_deref(), out) {
            Ok(text) => {
                print!("{text}");
                0
            }
            Err((code, msg)) => {
                eprintln!("{msg}");
                code
            }
        },
    };
    ExitCode::from(code as u8)
}
