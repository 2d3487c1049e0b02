use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;

use qpf_cli::config::ModeArg;
use qpf_cli::{execute, qualified_name, status, ExperimentConfig, RunKind};

/// Runs one experiment described by a JSON config.
#[derive(Parser, Debug)]
#[command(name = "qpf", version)]
struct Cli {
    /// Run name; overrides the config's `run` field.
    run: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides the config's `out` field.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = ["paper", "engineering"])]
    mode: Option<String>,
    /// Cap on every truncation degree.
    #[arg(long)]
    max_degree: Option<u32>,
    #[arg(long)]
    threads: Option<usize>,
}

fn load(cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => {
            let run = cli.run.as_deref().context("need a run name or --config")?;
            RunKind::parse(run)?;
            ExperimentConfig::from_json(&format!("{{\"run\":\"{run}\"}}"))?
        }
    };
    if let Some(r) = &cli.run {
        cfg.run = RunKind::parse(r)?;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(m) = &cli.mode {
        cfg.schedule.mode = Some(if m == "paper" {
            ModeArg::Paper
        } else {
            ModeArg::Engineering
        });
    }
    if let Some(k) = cli.max_degree {
        cfg.schedule.k_cap = k;
    }
    if let Some(o) = &cli.out {
        cfg.out = Some(o.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match load(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error[{}]: {e:#}", qualified_name(&e));
            return ExitCode::from(qpf_cli::exit_status(&e) as u8);
        }
    };
    let threads = cli.threads.unwrap_or(0);
    if threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error[io]: {e}");
            return ExitCode::from(status::RUN_ERROR as u8);
        }
    }
    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    match execute(&cfg, &out, rayon::current_num_threads()) {
        Ok((code, outcome, err)) => {
            if let Some(o) = outcome {
                println!("{}: {}", cfg.run, o.summary);
            }
            if let Some(e) = err {
                eprintln!("error[{}]: {e:#}", qualified_name(&e));
            }
            ExitCode::from(code as u8)
        }
        Err(e) => {
            eprintln!("error[io]: {e:#}");
            ExitCode::from(status::RUN_ERROR as u8)
        }
    }
}
