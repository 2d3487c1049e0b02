//! Experiment configuration: one JSON document selecting a run and its
//! inputs.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use qpf_core::arithmetic::FrequencySpec;
use qpf_core::kamflow::ConjugationChain;
use qpf_core::spectral::{PhiFunction, TorusFunction};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunKind {
    KamRun,
    KamAudit,
    Rotnum,
    SolveHomological,
    VerifyConjugacy,
    ModeLockScan,
    ApproximateLinearizable,
    ApproximateModelocked,
    Cf,
    Norm,
    Lyapunov,
}

impl RunKind {
    pub const ALL: [RunKind; 11] = [
        RunKind::KamRun,
        RunKind::KamAudit,
        RunKind::Rotnum,
        RunKind::SolveHomological,
        RunKind::VerifyConjugacy,
        RunKind::ModeLockScan,
        RunKind::ApproximateLinearizable,
        RunKind::ApproximateModelocked,
        RunKind::Cf,
        RunKind::Norm,
        RunKind::Lyapunov,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RunKind::KamRun => "kam-run",
            RunKind::KamAudit => "kam-audit",
            RunKind::Rotnum => "rotnum",
            RunKind::SolveHomological => "solve-homological",
            RunKind::VerifyConjugacy => "verify-conjugacy",
            RunKind::ModeLockScan => "mode-lock-scan",
            RunKind::ApproximateLinearizable => "approximate-linearizable",
            RunKind::ApproximateModelocked => "approximate-modelocked",
            RunKind::Cf => "cf",
            RunKind::Norm => "norm",
            RunKind::Lyapunov => "lyapunov",
        }
    }

    pub fn parse(name: &str) -> Result<Self, ConfigInvalid> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == name)
            .ok_or_else(|| ConfigInvalid(format!("unknown run `{name}`")))
    }
}

impl fmt::Display for RunKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeArg {
    Paper,
    Engineering,
}

/// The configuration failed to parse or validate.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigInvalid(pub String);

impl fmt::Display for ConfigInvalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigInvalid {}

/// A torus function given inline or as a path relative to the config file.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FunctionSource {
    File { file: PathBuf },
    Inline(TorusFunction),
}

impl FunctionSource {
    pub fn load(&self, base: &Path) -> Result<TorusFunction> {
        match self {
            FunctionSource::Inline(f) => Ok(f.clone()),
            FunctionSource::File { file } => {
                let path = base.join(file);
                let text = std::fs::read_to_string(&path)
                    .with_context(|| format!("reading {}", path.display()))?;
                Ok(TorusFunction::from_json(&text)?)
            }
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub rho: f64,
    #[serde(default)]
    pub g: Option<FunctionSource>,
    #[serde(default)]
    pub f: Option<FunctionSource>,
    #[serde(default = "one")]
    pub s: f64,
    #[serde(default = "one")]
    pub r: f64,
}

impl SystemSpec {
    pub fn load(&self, base: &Path) -> Result<(f64, PhiFunction, TorusFunction)> {
        let g = match &self.g {
            Some(src) => {
                PhiFunction::from_torus(src.load(base)?).context("g must not depend on θ")?
            }
            None => PhiFunction::zero(),
        };
        let f = match &self.f {
            Some(src) => src.load(base)?,
            None => TorusFunction::zero(),
        };
        Ok((self.rho, g, f))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleOverrides {
    /// Diophantine constant; audited from ρ̃ when absent (engineering) or
    /// 0.1 (paper audit).
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default)]
    pub c: Option<f64>,
    /// ε₀ as a decimal string, e.g. "1e-3" or "1.38e-43298923".
    #[serde(default)]
    pub eps0: Option<String>,
    #[serde(default)]
    pub s0: Option<f64>,
    #[serde(default)]
    pub r0: Option<f64>,
    #[serde(default)]
    pub mode: Option<ModeArg>,
    #[serde(default = "default_k_cap")]
    pub k_cap: u32,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    #[serde(default = "default_inner")]
    pub inner_passes: usize,
    #[serde(default = "default_bridge")]
    pub bridge: u32,
    /// Explicit Q_0, Q_1, … instead of the CD sequence.
    #[serde(default)]
    pub q: Option<Vec<f64>>,
    /// Scan bound for the audited γ.
    #[serde(default = "default_l_max")]
    pub l_max: u32,
}

impl Default for ScheduleOverrides {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields defaulted")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorArg {
    Plain,
    WeightedBirkhoff,
}

/// Run-specific parameters; each run reads the fields it needs.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunParams {
    pub horizon: Option<f64>,
    pub dt: Option<f64>,
    pub starts: Option<usize>,
    pub estimator: Option<EstimatorArg>,
    pub delta_range: Option<(f64, f64)>,
    pub n_points: Option<usize>,
    pub tolerance: Option<f64>,
    pub samples: Option<usize>,
    pub target: Option<f64>,
    pub eps: Option<f64>,
    /// Constant sl(2,R) matrix for `lyapunov`.
    pub matrix: Option<[[f64; 2]; 2]>,
    pub phi0: Option<[f64; 2]>,
    /// Chain file for `verify-conjugacy`; identity when absent.
    pub chain: Option<PathBuf>,
    /// Target system B for `verify-conjugacy`.
    pub system_b: Option<SystemSpec>,
    /// Function for `norm`.
    pub function: Option<FunctionSource>,
    pub s: Option<f64>,
    pub r: Option<f64>,
    /// Truncation K, widths δ and σ for `solve-homological`.
    pub k: Option<u32>,
    pub delta: Option<f64>,
    pub sigma: Option<f64>,
    pub waive: Option<bool>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub run: RunKind,
    #[serde(default = "FrequencySpec::golden")]
    pub frequency: FrequencySpec,
    #[serde(default = "default_depth")]
    pub depth: usize,
    #[serde(default)]
    pub system: Option<SystemSpec>,
    #[serde(default)]
    pub schedule: ScheduleOverrides,
    #[serde(default)]
    pub params: RunParams,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    /// Record wall time in per-step CSVs (breaks byte-identical output).
    #[serde(default)]
    pub timing: bool,
    /// Directory file references resolve against; the config's directory.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn one() -> f64 {
    1.0
}
fn default_tau() -> f64 {
    3.0
}
fn default_k_cap() -> u32 {
    64
}
fn default_n_max() -> usize {
    3
}
fn default_inner() -> usize {
    1
}
fn default_bridge() -> u32 {
    8
}
fn default_l_max() -> u32 {
    200
}
fn default_depth() -> usize {
    200
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigInvalid> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| ConfigInvalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg = Self::from_json(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigInvalid> {
        let bad = |m: &str| Err(ConfigInvalid(m.to_string()));
        if self.depth == 0 {
            return bad("depth must be positive");
        }
        let s = &self.schedule;
        if !(s.tau > 0.0 && s.tau.is_finite()) {
            return bad("tau must be positive");
        }
        if s.gamma.is_some_and(|g| !(g > 0.0)) {
            return bad("gamma must be positive");
        }
        if s.bridge < 2 {
            return bad("bridge parameter must be at least 2");
        }
        if s.n_max == 0 {
            return bad("n_max must be positive");
        }
        if let Some(e) = &s.eps0 {
            parse_ln_decimal(e)?;
        }
        let needs_system = matches!(
            self.run,
            RunKind::KamRun
                | RunKind::Rotnum
                | RunKind::SolveHomological
                | RunKind::VerifyConjugacy
                | RunKind::ModeLockScan
                | RunKind::ApproximateLinearizable
                | RunKind::ApproximateModelocked
        );
        if needs_system && self.system.is_none() {
            return Err(ConfigInvalid(format!(
                "run `{}` needs a `system`",
                self.run
            )));
        }
        let p = &self.params;
        match self.run {
            RunKind::Norm if p.function.is_none() => {
                return bad("run `norm` needs params.function")
            }
            RunKind::Lyapunov if p.matrix.is_none() => {
                return bad("run `lyapunov` needs params.matrix")
            }
            RunKind::VerifyConjugacy if p.system_b.is_none() => {
                return bad("run `verify-conjugacy` needs params.system_b")
            }
            RunKind::SolveHomological if p.k.is_none() => {
                return bad("run `solve-homological` needs params.k")
            }
            RunKind::ApproximateModelocked if p.eps.is_none() => {
                return bad("run `approximate-modelocked` needs params.eps")
            }
            RunKind::ModeLockScan if p.n_points.is_some_and(|n| n < 11) => {
                return bad("n_points must be at least 11")
            }
            _ => {}
        }
        Ok(())
    }

    pub fn load_chain(&self) -> Result<ConjugationChain> {
        match &self.params.chain {
            None => Ok(ConjugationChain::identity()),
            Some(p) => {
                let path = self.base_dir.join(p);
                let text = std::fs::read_to_string(&path)
                    .with_context(|| format!("reading {}", path.display()))?;
                Ok(ConjugationChain::from_json(&text)?)
            }
        }
    }
}

/// Natural log of a positive decimal literal `m[eE]x`, exact in the exponent
/// so that values far below f64 range are representable.
pub fn parse_ln_decimal(s: &str) -> Result<f64, ConfigInvalid> {
    let bad = || ConfigInvalid(format!("bad decimal `{s}`"));
    let t = s.trim();
    let (m, e) = match t.find(['e', 'E']) {
        Some(i) => (&t[..i], t[i + 1..].parse::<i64>().map_err(|_| bad())?),
        None => (t, 0),
    };
    let m: f64 = m.parse().map_err(|_| bad())?;
    if !(m > 0.0 && m.is_finite()) {
        return Err(bad());
    }
    Ok(m.ln() + e as f64 * std::f64::consts::LN_10)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_cf_config() {
        let c = ExperimentConfig::from_json(r#"{"run":"cf"}"#).unwrap();
        assert_eq!(c.run, RunKind::Cf);
        assert_eq!(c.frequency, FrequencySpec::golden());
        assert_eq!(c.schedule.k_cap, 64);
    }

    #[test]
    fn unknown_run_is_invalid() {
        assert!(ExperimentConfig::from_json(r#"{"run":"fly"}"#).is_err());
        assert!(RunKind::parse("fly").is_err());
        assert_eq!(RunKind::parse("kam-run").unwrap(), RunKind::KamRun);
    }

    #[test]
    fn unknown_field_is_invalid() {
        assert!(ExperimentConfig::from_json(r#"{"run":"cf","colour":1}"#).is_err());
    }

    #[test]
    fn run_requirements() {
        assert!(ExperimentConfig::from_json(r#"{"run":"kam-run"}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"run":"lyapunov"}"#).is_err());
        let c = r#"{"run":"kam-run","system":{"rho":0.4,"f":{"s":1,"r":1,"modes":[]}}}"#;
        assert!(ExperimentConfig::from_json(c).is_ok());
    }

    #[test]
    fn names_roundtrip() {
        for k in RunKind::ALL {
            let j = serde_json::to_string(&k).unwrap();
            assert_eq!(j, format!("\"{}\"", k.name()));
        }
    }

    #[test]
    fn ln_decimal() {
        assert!((parse_ln_decimal("1e-3").unwrap() - 1e-3f64.ln()).abs() < 1e-12);
        let v = parse_ln_decimal("1.38010e-43298923").unwrap();
        assert!((v - (1.3801f64.ln() - 43298923.0 * std::f64::consts::LN_10)).abs() < 1e-6);
        assert!(parse_ln_decimal("-1").is_err());
        assert!(parse_ln_decimal("x").is_err());
    }
}
