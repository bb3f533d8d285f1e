use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use heatlab_cli::catalog::list_builtin_operators;
use heatlab_cli::config::ExperimentConfig;
use heatlab_cli::runner::run;
use heatlab_cli::selftest;

#[derive(Parser)]
#[command(name = "heatlab", version, about = "Large-time behavior of minimal heat kernels on grid exhaustions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        config: PathBuf,
        /// Output directory, overriding the config's.
        #[arg(long)]
        out: Option<PathBuf>,
        /// `tolerances.<field>=<json>`; repeatable.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Print the built-in operators as JSON.
    Catalog,
    /// Run the acceptance criteria; optionally only some of them.
    Selftest {
        #[arg(value_parser = clap::value_parser!(u8).range(1..=12))]
        criteria: Vec<u8>,
    },
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { config, out, overrides } => {
            let mut cfg = match ExperimentConfig::load(&config) {
                Ok(c) => c,
                Err(e) => return fail(e),
            };
            for o in &overrides {
                if let Err(e) = cfg.apply_override(o) {
                    return fail(e);
                }
            }
            if let Some(out) = out {
                cfg.output = out;
            }
            match run(&cfg) {
                Ok(report) => {
                    for w in &report.warnings {
                        eprintln!("warning: {w}");
                    }
                    for t in &report.tasks {
                        let status = t.verdict.as_deref().unwrap_or(match &t.error {
                            Some(_) => "error",
                            None => "done",
                        });
                        eprintln!("{:<14} {status} ({:.2}s)", t.task.as_str(), t.wall_time_s);
                        if let Some(e) = &t.error {
                            eprintln!("  {e}");
                        }
                    }
                    eprintln!("report: {}", cfg.output.join("report.json").display());
                    ExitCode::from(report.exit_code() as u8)
                }
                Err(e) => fail(e),
            }
        }
        Command::Catalog => {
            println!("{}", serde_json::to_string_pretty(&list_builtin_operators()).expect("catalog serializes"));
            ExitCode::SUCCESS
        }
        Command::Selftest { criteria } => {
            let ids: Vec<usize> = if criteria.is_empty() {
                (1..=12).collect()
            } else {
                criteria.iter().map(|&c| c as usize).collect()
            };
            let mut ok = true;
            for id in ids {
                let r = selftest::run_criterion(id);
                ok &= r.passed;
                println!("{r}");
            }
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn fail(e: heatlab_cli::error::CliError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}
