//! One function per run kind. Each writes its artifacts and reports whether
//! every certified bound or measured contract held.

use anyhow::{anyhow, Context, Result};
use serde::Serialize;

use qpf_core::arithmetic::{audit_diophantine, expand_continued_fraction, Frequency};
use qpf_core::dynamics::{
    lyapunov_exponent, mode_lock_scan, rotation_number, verify_conjugacy, CompiledField,
    ConjugacyOptions, DynamicsError, Estimator, RotationOptions, Sl2Flow,
};
use qpf_core::homological::{solve_homological, HomologicalParams};
use qpf_core::kamflow::{
    certify_paper_schedule, linearizable_approximant, mode_locked_approximant,
    run_rotations_reducibility, EngineeringSchedule, KamSchedule, PaperInputs, PaperSchedule,
    QpfSystem, RunOptions, StepReport,
};

use crate::config::{
    parse_ln_decimal, EstimatorArg, ExperimentConfig, ModeArg, RunKind, SystemSpec,
};
use crate::output::{num, opt, OutDir};

/// Result of a completed run.
#[derive(Clone, Debug, Serialize)]
pub struct Outcome {
    /// All certified bounds or measured contracts held.
    pub ok: bool,
    pub summary: String,
}

/// Bound checks reported in `steps.csv` as `slack_<name>` = 1 − actual/bound,
/// in this column order.
pub const STEP_CHECKS: [&str; 9] = [
    "a_h_norm",
    "a_imaginary_shift",
    "a_tail_norm",
    "a_mean",
    "b_h_tilde_norm",
    "b_h_tilde_derivative",
    "b_g_drift",
    "c_displacement",
    "c_displacement_derivative",
];

pub fn run(cfg: &ExperimentConfig, out: &mut OutDir) -> Result<Outcome> {
    match cfg.run {
        RunKind::Cf => cf(cfg, out),
        RunKind::Norm => norm(cfg, out),
        RunKind::KamAudit => kam_audit(cfg, out),
        RunKind::KamRun => kam_run(cfg, out),
        RunKind::Rotnum => rotnum(cfg, out),
        RunKind::SolveHomological => solve(cfg, out),
        RunKind::VerifyConjugacy => conjugacy(cfg, out),
        RunKind::ModeLockScan => scan(cfg, out),
        RunKind::ApproximateLinearizable => linearizable(cfg, out),
        RunKind::ApproximateModelocked => modelocked(cfg, out),
        RunKind::Lyapunov => lyapunov(cfg, out),
    }
}

fn frequency(cfg: &ExperimentConfig) -> Result<Frequency> {
    Ok(expand_continued_fraction(&cfg.frequency, cfg.depth)?)
}

fn load_system(cfg: &ExperimentConfig, spec: &SystemSpec, omega: [f64; 2]) -> Result<QpfSystem> {
    let (rho, g, f) = spec.load(&cfg.base_dir)?;
    Ok(QpfSystem::new(
        rho,
        g,
        f.with_strips(spec.s, spec.r),
        omega,
        spec.s,
        spec.r,
    ))
}

fn system(cfg: &ExperimentConfig, freq: &Frequency) -> Result<QpfSystem> {
    let spec = cfg
        .system
        .as_ref()
        .ok_or_else(|| anyhow!("missing system"))?;
    load_system(cfg, spec, freq.omega())
}

fn gamma(cfg: &ExperimentConfig, freq: &Frequency, rho: f64) -> f64 {
    cfg.schedule.gamma.unwrap_or_else(|| {
        audit_diophantine(rho, freq, 0.0, cfg.schedule.tau, cfg.schedule.l_max).min_margin
    })
}

fn rotation_options(cfg: &ExperimentConfig) -> RotationOptions {
    let p = &cfg.params;
    RotationOptions {
        horizon: p.horizon.unwrap_or(1e3),
        dt: p.dt.unwrap_or(1e-2),
        estimator: match p.estimator.unwrap_or(EstimatorArg::WeightedBirkhoff) {
            EstimatorArg::Plain => Estimator::Plain,
            EstimatorArg::WeightedBirkhoff => Estimator::WeightedBirkhoff,
        },
        starts: p.starts.unwrap_or(5),
        seed: cfg.seed,
    }
}

fn run_options(cfg: &ExperimentConfig) -> RunOptions {
    RunOptions {
        timing: cfg.timing,
        ..RunOptions::default()
    }
}

fn engineering_schedule(
    cfg: &ExperimentConfig,
    freq: &mut Frequency,
    sys: &QpfSystem,
) -> Result<EngineeringSchedule> {
    let s = &cfg.schedule;
    let q = match &s.q {
        Some(q) => q.clone(),
        None => {
            freq.analyze(s.bridge)?;
            EngineeringSchedule::q_from_frequency(freq)
        }
    };
    let rho = sys.rho_tilde + sys.g.mean();
    let mut sched = EngineeringSchedule::new(
        gamma(cfg, freq, rho),
        s.tau,
        s.s0.unwrap_or(sys.class.s),
        s.r0.unwrap_or(sys.class.r),
        q,
    );
    sched.k_cap = s.k_cap;
    sched.inner_passes = s.inner_passes;
    sched.eps0 = s
        .eps0
        .as_deref()
        .map(parse_ln_decimal)
        .transpose()?
        .map(f64::exp);
    Ok(sched)
}

fn paper_schedule(cfg: &ExperimentConfig, freq: &Frequency) -> Result<PaperSchedule> {
    let s = &cfg.schedule;
    let mut inp = PaperInputs::new(
        s.gamma.unwrap_or(0.1),
        s.tau,
        s.s0.unwrap_or(1.0),
        s.r0.unwrap_or(1.0),
        s.n_max,
    );
    inp.bridge_param = s.bridge;
    inp.c = s.c;
    inp.ln_eps0 = s.eps0.as_deref().map(parse_ln_decimal).transpose()?;
    Ok(certify_paper_schedule(freq, &inp)?)
}

fn cf(cfg: &ExperimentConfig, out: &mut OutDir) -> Result<Outcome> {
    let mut freq = frequency(cfg)?;
    let analysis = freq
        .analyze(cfg.schedule.bridge)
        .err()
        .map(|e| e.to_string());
    #[derive(Serialize)]
    struct Cf {
        #[serde(flatten)]
        summary: qpf_core::arithmetic::FrequencySummary,
        analysis_error: Option<String>,
    }
    let summary = freq.summary();
    let rows: Vec<Vec<String>> = summary
        .partial_quotients
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let (p, q) = &summary.convergents[i + 1];
            vec![(i + 1).to_string(), a.clone(), p.clone(), q.clone()]
        })
        .collect();
    out.csv("convergents.csv", &["n", "a_n", "p_n", "q_n"], &rows)?;
    let line = format!(
        "alpha={} depth={} cd={:?}",
        summary.alpha, summary.depth, summary.cd_indices
    );
    out.json(
        "result.json",
        &Cf {
            summary,
            analysis_error: analysis,
        },
    )?;
    Ok(Outcome {
        ok: true,
        summary: line,
    })
}

fn norm(cfg: &ExperimentConfig, out: &mut OutDir) -> Result<Outcome> {
    let f = cfg
        .params
        .function
        .as_ref()
        .ok_or_else(|| anyhow!("missing params.function"))?
        .load(&cfg.base_dir)?;
    let (s0, r0) = f.strips();
    let (s, r) = (cfg.params.s.unwrap_or(s0), cfg.params.r.unwrap_or(r0));
    #[derive(Serialize)]
    struct Norm {
        s: f64,
        r: f64,
        norm: f64,
        modes: usize,
        max_degree: u32,
    }
    let n = Norm {
        s,
        r,
        norm: f.norm(s, r),
        modes: f.len(),
        max_degree: f.max_degree(),
    };
    let line = format!("N_{{{s},{r}}} = {:e}", n.norm);
    out.json("result.json", &n)?;
    Ok(Outcome {
        ok: true,
        summary: line,
    })
}

fn inequality_rows(s: &PaperSchedule) -> Vec<Vec<String>> {
    s.inequalities
        .iter()
        .map(|i| {
            vec![
                i.name.clone(),
                i.step.map(|n| n.to_string()).unwrap_or_default(),
                i.log_scale.to_string(),
                num(i.lhs.lo()),
                num(i.lhs.hi()),
                num(i.rhs.lo()),
                num(i.rhs.hi()),
                i.certified.to_string(),
            ]
        })
        .collect()
}

const INEQUALITY_HEADER: [&str; 8] = [
    "name",
    "step",
    "log_scale",
    "lhs_lo",
    "lhs_hi",
    "rhs_lo",
    "rhs_hi",
    "certified",
];

fn kam_audit(cfg: &ExperimentConfig, out: &mut OutDir) -> Result<Outcome> {
    let freq = frequency(cfg)?;
    let s = paper_schedule(cfg, &freq)?;
    out.csv("inequalities.csv", &INEQUALITY_HEADER, &inequality_rows(&s))?;
    out.json("result.json", &s)?;
    let failed = s.failures().count();
    Ok(Outcome {
        ok: s.certified,
        summary: format!(
            "{} inequalities, {failed} uncertified; required eps0 < {}",
            s.inequalities.len(),
            s.eps0_bound_decimal
        ),
    })
}

fn step_rows(steps: &[StepReport], timing: bool) -> (Vec<String>, Vec<Vec<String>>) {
    let mut header: Vec<String> = [
        "n",
        "q_n",
        "s_n",
        "r_n",
        "g_norm",
        "f_norm",
        "k_used",
        "contracts_met",
    ]
    .map(String::from)
    .to_vec();
    header.extend(STEP_CHECKS.iter().map(|c| format!("slack_{c}")));
    if timing {
        header.push("wall_ms".into());
    }
    let rows = steps
        .iter()
        .map(|s| {
            let mut row = vec![
                s.n.to_string(),
                num(s.q_n),
                num(s.s_n),
                num(s.r_n),
                num(s.g_norm),
                num(s.f_norm),
                s.k_used().to_string(),
                s.contracts_met.to_string(),
            ];
            for name in STEP_CHECKS {
                row.push(opt(s
                    .checks
                    .iter()
                    .find(|c| c.name == name)
                    .map(|c| 1.0 - c.ratio())));
            }
            if timing {
                row.push(opt(s.wall_ms));
            }
            row
        })
        .collect();
    (header, rows)
}

fn kam_run(cfg: &ExperimentConfig, out: &mut OutDir) -> Result<Outcome> {
    let mut freq = frequency(cfg)?;
    let sys = system(cfg, &freq)?;
    let mode = cfg.schedule.mode.unwrap_or(ModeArg::Engineering);
    let sched = match mode {
        ModeArg::Engineering => {
            KamSchedule::Engineering(engineering_schedule(cfg, &mut freq, &sys)?)
        }
        ModeArg::Paper => KamSchedule::PaperAudit(paper_schedule(cfg, &freq)?),
    };
    let run = run_rotations_reducibility(&sys, &sched, cfg.schedule.n_max, &run_options(cfg))?;
    let (header, rows) = step_rows(&run.steps, cfg.timing);
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    out.csv("steps.csv", &header, &rows)?;
    out.text("chain.json", &(run.chain.to_json() + "\n"))?;
    out.json("system.json", &run.system)?;
    out.json("result.json", &run)?;
    let ok = run.contracts_met() && run.diagnostics.derivative_ok;
    let last = run
        .steps
        .last()
        .map(|s| s.f_norm)
        .unwrap_or_else(|| run.system.f_norm());
    Ok(Outcome {
        ok,
        summary: format!(
            "{} steps, chain length {}, final N(f) = {last:e}, contracts {}",
            run.steps.len(),
            run.chain.len(),
            if ok { "met" } else { "not met" }
        ),
    })
}

fn rotnum(cfg: &ExperimentConfig, out: &mut OutDir) -> Result<Outcome> {
    let freq = frequency(cfg)?;
    let field = CompiledField::from_system(&system(cfg, &freq)?);
    let opts = rotation_options(cfg);
    #[derive(Serialize)]
    struct Rot {
        rho: f64,
        error: f64,
        per_start: Vec<f64>,
        consistent: bool,
    }
    let r = match rotation_number(&field, &opts) {
        Ok(r) => Rot {
            rho: r.rho,
            error: r.error,
            per_start: r.per_start,
            consistent: true,
        },
        Err(DynamicsError::InconsistentStarts { estimates, error }) => Rot {
            rho: estimates.iter().sum::<f64>() / estimates.len() as f64,
            error,
            per_start: estimates,
            consistent: false,
        },
        Err(e) => return Err(e.into()),
    };
    let rows: Vec<Vec<String>> = r
        .per_start
        .iter()
        .enumerate()
        .map(|(i, x)| vec![i.to_string(), num(*x), num(r.error)])
        .collect();
    out.csv("rotnum.csv", &["start", "estimate", "error_bar"], &rows)?;
    out.json("result.json", &r)?;
    Ok(Outcome {
        ok: r.consistent,
        summary: format!(
            "rho = {:.15} ± {:e}{}",
            r.rho,
            r.error,
            if r.consistent {
                ""
            } else {
                " (inconsistent starts)"
            }
        ),
    })
}

fn solve(cfg: &ExperimentConfig, out: &mut OutDir) -> Result<Outcome> {
    let freq = frequency(cfg)?;
    let sys = system(cfg, &freq)?;
    let p = &cfg.params;
    let k = p.k.context("solve-homological needs params.k")?;
    let rho = sys.rho_tilde + sys.g.mean();
    let mut params = HomologicalParams::with_default_widths(
        sys.rho_tilde,
        freq.omega(),
        k,
        sys.class.s,
        sys.class.r,
        gamma(cfg, &freq, rho),
        cfg.schedule.tau,
    );
    if let Some(d) = p.delta {
        params.delta = d;
        params.sigma = d / 2.0;
    }
    if let Some(s) = p.sigma {
        params.sigma = s;
    }
    params.waive = p.waive.unwrap_or(false);
    let sol = solve_homological(&sys.f, &sys.g, &params)?;
    let rows: Vec<Vec<String>> = sol
        .modes
        .iter()
        .map(|m| {
            vec![
                m.l.to_string(),
                m.lattice_size.to_string(),
                num(m.min_margin),
                num(m.c_value),
                m.neumann_iters.to_string(),
                num(m.h_norm),
                num(sol.h_bound),
                num(m.h_norm / sol.h_bound),
            ]
        })
        .collect();
    out.csv(
        "diagnostics.csv",
        &[
            "l",
            "lattice_size",
            "min_margin",
            "c_value",
            "neumann_iters",
            "h_norm",
            "bound",
            "ratio",
        ],
        &rows,
    )?;
    out.json("result.json", &sol)?;
    let ok = sol.certified || (params.waive && sol.equation_residual <= 1e-10);
    Ok(Outcome {
        ok,
        summary: format!(
            "N(h) = {:e} (bound {:e}), N(P) = {:e} (bound {:e}), certified = {}",
            sol.h_norm, sol.h_bound, sol.p_norm, sol.p_bound, sol.certified
        ),
    })
}

fn conjugacy(cfg: &ExperimentConfig, out: &mut OutDir) -> Result<Outcome> {
    let freq = frequency(cfg)?;
    let a = CompiledField::from_system(&system(cfg, &freq)?);
    let spec_b = cfg
        .params
        .system_b
        .as_ref()
        .ok_or_else(|| anyhow!("missing params.system_b"))?;
    let b = CompiledField::from_system(&load_system(cfg, spec_b, freq.omega())?);
    let chain = cfg.load_chain()?;
    let p = &cfg.params;
    let mut rot = rotation_options(cfg);
    rot.horizon = rot.horizon.max(100.0);
    let opts = ConjugacyOptions {
        samples: p.samples.unwrap_or(100),
        horizon: 50.0,
        dt: p.dt.unwrap_or(1e-3),
        check_stride: 100,
        seed: cfg.seed,
        rotation: Some(rot),
    };
    let rep = verify_conjugacy(&chain, &a, &b, &opts)?;
    let tol = p.tolerance.unwrap_or(1e-5);
    let (diff, bars) = rep.rho_difference.unwrap_or((0.0, 0.0));
    out.csv(
        "conjugacy.csv",
        &[
            "samples",
            "max_defect",
            "mean_defect",
            "rho_difference",
            "error_bars",
        ],
        &[vec![
            rep.samples.to_string(),
            num(rep.max_defect),
            num(rep.mean_defect),
            num(diff),
            num(bars),
        ]],
    )?;
    out.json("result.json", &rep)?;
    let ok = rep.max_defect <= tol && diff <= bars;
    Ok(Outcome {
        ok,
        summary: format!(
            "max defect {:e} (tolerance {tol:e}), |Δρ| = {diff:e} vs error bars {bars:e}",
            rep.max_defect
        ),
    })
}

fn scan(cfg: &ExperimentConfig, out: &mut OutDir) -> Result<Outcome> {
    let freq = frequency(cfg)?;
    let field = CompiledField::from_system(&system(cfg, &freq)?);
    let p = &cfg.params;
    let s = mode_lock_scan(
        &field,
        p.delta_range.unwrap_or((-0.05, 0.05)),
        p.n_points.unwrap_or(21),
        p.tolerance.unwrap_or(1e-3),
        &rotation_options(cfg),
    )?;
    let rows: Vec<Vec<String>> = s
        .points
        .iter()
        .map(|q| {
            vec![
                num(q.delta),
                num(q.rho),
                num(q.error),
                q.consistent.to_string(),
            ]
        })
        .collect();
    out.csv(
        "scan.csv",
        &["delta", "estimate", "error_bar", "consistent"],
        &rows,
    )?;
    out.json("result.json", &s)?;
    let ok = s.points.iter().all(|q| q.consistent);
    Ok(Outcome {
        ok,
        summary: format!(
            "plateau [{:e}, {:e}], half-width {:e}",
            s.plateau.0, s.plateau.1, s.half_width
        ),
    })
}

fn linearizable(cfg: &ExperimentConfig, out: &mut OutDir) -> Result<Outcome> {
    let mut freq = frequency(cfg)?;
    let sys = system(cfg, &freq)?;
    let sched = engineering_schedule(cfg, &mut freq, &sys)?;
    let target = cfg.params.target.unwrap_or(1e-4);
    let lin =
        linearizable_approximant(&sys, &sched, target, cfg.schedule.n_max, &run_options(cfg))?;
    out.text("chain.json", &(lin.chain.to_json() + "\n"))?;
    out.json("system.json", &lin.system)?;
    out.json("result.json", &lin)?;
    Ok(Outcome {
        ok: lin.distance < target,
        summary: format!(
            "distance {:e} after {} steps, rotation {:.15}",
            lin.distance, lin.steps_used, lin.rotation
        ),
    })
}

fn modelocked(cfg: &ExperimentConfig, out: &mut OutDir) -> Result<Outcome> {
    let freq = frequency(cfg)?;
    let sys = system(cfg, &freq)?;
    let eps = cfg
        .params
        .eps
        .context("approximate-modelocked needs params.eps")?;
    let m = mode_locked_approximant(
        sys.rho_tilde + sys.g.mean(),
        freq.omega(),
        eps,
        cfg.schedule.k_cap,
    )?;
    out.json("system.json", &m.system)?;
    out.json("result.json", &m)?;
    Ok(Outcome {
        ok: true,
        summary: format!(
            "k = {:?}, |<k,ω> − ρ| = {:e}, bound {:e}",
            m.k, m.approximation_error, m.bound
        ),
    })
}

fn lyapunov(cfg: &ExperimentConfig, out: &mut OutDir) -> Result<Outcome> {
    let freq = frequency(cfg)?;
    let p = &cfg.params;
    let m = p.matrix.context("lyapunov needs params.matrix")?;
    let flow = Sl2Flow::constant(m, freq.omega())?;
    let horizon = p.horizon.unwrap_or(1e3);
    if horizon < 1e3 {
        return Err(
            crate::config::ConfigInvalid("lyapunov horizon must be at least 1e3".into()).into(),
        );
    }
    let l = lyapunov_exponent(
        &flow,
        p.phi0.unwrap_or([0.0, 0.0]),
        horizon,
        p.dt.unwrap_or(1e-2),
    )?;
    out.csv(
        "lyapunov.csv",
        &["horizon", "estimate", "error_bar"],
        &[vec![num(horizon), num(l.exponent), num(l.error)]],
    )?;
    out.json("result.json", &l)?;
    Ok(Outcome {
        ok: true,
        summary: format!("lambda = {} ± {:e}", l.exponent, l.error),
    })
}
