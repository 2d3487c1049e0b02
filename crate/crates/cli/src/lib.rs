//! Batch front end: configuration, dispatch, artifacts and exit status.

// `!(x > y)` is used on purpose to reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod output;
pub mod runs;

use std::path::Path;
use std::time::Instant;

use anyhow::Result;
use serde::Serialize;

use qpf_core::arithmetic::ArithmeticError;
use qpf_core::dynamics::DynamicsError;
use qpf_core::homological::HomologicalError;
use qpf_core::kamflow::KamError;
use qpf_core::spectral::SpectralError;

pub use config::{ConfigInvalid, ExperimentConfig, RunKind};
pub use output::OutDir;
pub use runs::Outcome;

/// Process exit statuses.
pub mod status {
    pub const OK: i32 = 0;
    pub const CONTRACTS_FAILED: i32 = 1;
    pub const CONFIG_INVALID: i32 = 2;
    pub const RUN_ERROR: i32 = 3;
}

fn variant<E: std::fmt::Debug>(e: &E) -> String {
    format!("{e:?}")
        .chars()
        .take_while(|c| c.is_alphanumeric() || *c == '_')
        .collect()
}

/// Module-qualified error name, e.g. `kamflow::ScheduleInfeasible`.
pub fn qualified_name(err: &anyhow::Error) -> String {
    for cause in err.chain() {
        if cause.downcast_ref::<ConfigInvalid>().is_some() {
            return "config-invalid".into();
        }
        if let Some(e) = cause.downcast_ref::<KamError>() {
            return format!("kamflow::{}", variant(e));
        }
        if let Some(e) = cause.downcast_ref::<DynamicsError>() {
            return format!("dynamics::{}", variant(e));
        }
        if let Some(e) = cause.downcast_ref::<HomologicalError>() {
            return format!("homological::{}", variant(e));
        }
        if let Some(e) = cause.downcast_ref::<SpectralError>() {
            return format!("spectral::{}", variant(e));
        }
        if let Some(e) = cause.downcast_ref::<ArithmeticError>() {
            return format!("arithmetic::{}", variant(e));
        }
    }
    "io".into()
}

pub fn exit_status(err: &anyhow::Error) -> i32 {
    if qualified_name(err) == "config-invalid" {
        status::CONFIG_INVALID
    } else {
        status::RUN_ERROR
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    run: RunKind,
    config: &'a ExperimentConfig,
    seed: u64,
    threads: usize,
    artifacts: Vec<String>,
    status: i32,
    outcome: Option<&'a Outcome>,
    error: Option<String>,
    elapsed_ms: f64,
}

/// Runs `cfg` into `out_dir` and writes the manifest. Returns the exit status.
pub fn execute(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    threads: usize,
) -> Result<(i32, Option<Outcome>, Option<anyhow::Error>)> {
    let start = Instant::now();
    let mut out = OutDir::create(out_dir)?;
    let result = runs::run(cfg, &mut out);
    let (code, outcome, err) = match result {
        Ok(o) => (
            if o.ok {
                status::OK
            } else {
                status::CONTRACTS_FAILED
            },
            Some(o),
            None,
        ),
        Err(e) => (exit_status(&e), None, Some(e)),
    };
    let mut artifacts = out.artifacts().to_vec();
    artifacts.push("manifest.json".into());
    let manifest = Manifest {
        tool: "qpf",
        version: env!("CARGO_PKG_VERSION"),
        run: cfg.run,
        config: cfg,
        seed: cfg.seed,
        threads,
        artifacts,
        status: code,
        outcome: outcome.as_ref(),
        error: err
            .as_ref()
            .map(|e| format!("{}: {e:#}", qualified_name(e))),
        elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
    };
    out.json("manifest.json", &manifest)?;
    Ok((code, outcome, err))
}
