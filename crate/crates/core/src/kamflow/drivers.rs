//! Iteration drivers and the approximant constructions.

use std::f64::consts::PI;
use std::time::Instant;

use serde::Serialize;

use super::steps::{
    step_a_eliminate, step_b_reduce, step_c_conjugate_back, BoundCheck, InnerOptions, PassReport,
};
use super::{
    ChainElement, ConjugationChain, EngineeringSchedule, KamError, KamSchedule, PaperSchedule,
    QpfSystem,
};
use crate::interval::{decimal_from_log10, Interval};
use crate::spectral::{CollocationOptions, PhiFunction, TorusFunction};

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub collocation: CollocationOptions,
    /// Record wall time per step.
    pub timing: bool,
    /// Derivative orders |j| for the C^∞ criterion.
    pub derivative_orders: Vec<u32>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            collocation: CollocationOptions::default(),
            timing: false,
            derivative_orders: vec![1, 2],
        }
    }
}

/// One row of the per-step report.
#[derive(Clone, Debug, Serialize)]
pub struct StepReport {
    pub n: usize,
    pub q_n: f64,
    pub s_n: f64,
    pub r_n: f64,
    pub g_norm: f64,
    pub f_norm: f64,
    /// ĝ(0) of the step output, the accumulated rotation shift.
    pub g_mean: f64,
    pub passes: Vec<PassReport>,
    pub early_exit: bool,
    pub checks: Vec<BoundCheck>,
    /// Equation residuals, collocation residuals and inner contraction all
    /// within tolerance.
    pub contracts_met: bool,
    pub wall_ms: Option<f64>,
}

impl StepReport {
    pub fn min_slack(&self) -> f64 {
        self.checks
            .iter()
            .map(|c| 1.0 - c.ratio())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn bounds_ok(&self) -> bool {
        self.checks.iter().all(BoundCheck::holds)
    }

    pub fn k_used(&self) -> u32 {
        self.passes.iter().map(|p| p.k).max().unwrap_or(0)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceDiagnostics {
    /// Π (1 + N(∂_θ h)) over the chain after each step.
    pub derivative_products: Vec<f64>,
    /// Π (1 + 4ε_i^{3/4}) with measured ε_i.
    pub derivative_bounds: Vec<f64>,
    pub derivative_ok: bool,
    /// Bound on N(H^{(n+1)} − H^{(n)}) and the reference 8ε^{3/4}.
    pub increments: Vec<BoundCheck>,
    /// (step, |j|, holds) for Q_{n+1}^{4|j|} ε_n^{3/4} < ε_n^{1/2}.
    pub smoothness: Vec<(usize, u32, bool)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ReducibilityRun {
    pub chain: ConjugationChain,
    /// Limit of g; the rotation is `system.rho_tilde + g_limit.mean()`.
    pub g_limit: PhiFunction,
    pub system: QpfSystem,
    pub steps: Vec<StepReport>,
    pub diagnostics: ConvergenceDiagnostics,
    /// ĝ(0) moved into ρ̃ at load.
    pub load_shift: f64,
    /// The paper-audit schedule when the run was an audit.
    pub audit: Option<PaperSchedule>,
}

impl ReducibilityRun {
    pub fn contracts_met(&self) -> bool {
        self.steps.iter().all(|s| s.contracts_met)
    }
}

fn contracts(passes: &[PassReport], tol: f64) -> bool {
    passes.iter().all(|p| {
        p.equation_residual <= super::EQUATION_TOL
            && p.collocation_residual <= tol
            && p.contraction_ok
    })
}

fn elapsed(t: Option<Instant>) -> Option<f64> {
    t.map(|t| t.elapsed().as_secs_f64() * 1e3)
}

fn paper_audit_only(sys0: &QpfSystem, sched: &PaperSchedule) -> Result<ReducibilityRun, KamError> {
    if !sched.certified {
        let first = sched
            .failures()
            .next()
            .expect("uncertified schedule has a failure");
        return Err(KamError::BoundViolated {
            which: first.name.clone(),
            actual: first.lhs.hi(),
            bound: first.rhs.lo(),
        });
    }
    let (sys, shift) = sys0.normalized();
    let size = sys.f_norm().max(sys.g_norm());
    if size > 0.0 {
        let ln = Interval::approx(size.ln());
        if !ln.certainly_lt(&sched.ln_eps0) {
            return Err(KamError::ScheduleInfeasible {
                required: decimal_from_log10(sched.ln_eps0_bound.div(&Interval::ln10()), true, 6),
                actual: format!("{size:e}"),
            });
        }
    }
    // Only the zero perturbation is representable below the bound.
    Ok(ReducibilityRun {
        chain: ConjugationChain::identity(),
        g_limit: sys.g.clone(),
        system: sys,
        steps: Vec::new(),
        diagnostics: ConvergenceDiagnostics {
            derivative_products: Vec::new(),
            derivative_bounds: Vec::new(),
            derivative_ok: true,
            increments: Vec::new(),
            smoothness: Vec::new(),
        },
        load_shift: shift,
        audit: Some(sched.clone()),
    })
}

fn first_step(
    sys: &QpfSystem,
    sched: &EngineeringSchedule,
    eps0: f64,
    opts: &RunOptions,
) -> Result<(QpfSystem, ConjugationChain, StepReport), KamError> {
    let t = opts.timing.then(Instant::now);
    let inner = InnerOptions::from_schedule(sched);
    let b = step_b_reduce(sys, 1, sched, eps0, &inner, &opts.collocation)?;
    let mut chain = ConjugationChain::identity();
    for e in &b.elements {
        chain.push(ChainElement::NearIdentity { h: e.clone() });
    }
    let mut out = b.system.clone();
    out.class.s = sched.s(1);
    out.class.r = sched.r(1);
    out.f = out.f.with_strips(out.class.s, out.class.r);
    let report = StepReport {
        n: 1,
        q_n: sched.q_n(1),
        s_n: out.class.s,
        r_n: out.class.r,
        g_norm: out.g_norm(),
        f_norm: out.f_norm(),
        g_mean: out.g.mean(),
        contracts_met: contracts(&b.passes, opts.collocation.tolerance),
        passes: b.passes,
        early_exit: b.early_exit,
        checks: b.checks,
        wall_ms: elapsed(t),
    };
    Ok((out, chain, report))
}

fn engineering_eps0(sys: &QpfSystem, sched: &EngineeringSchedule) -> f64 {
    sched.eps0.unwrap_or_else(|| sys.f_norm().max(sys.g_norm()))
}

/// Full (a, b, c) steps for n = 1…n_max; step 1 is the inner loop alone.
pub fn run_rotations_reducibility(
    sys0: &QpfSystem,
    sched: &KamSchedule,
    n_max: usize,
    opts: &RunOptions,
) -> Result<ReducibilityRun, KamError> {
    let sched = match sched {
        KamSchedule::PaperAudit(p) => return paper_audit_only(sys0, p),
        KamSchedule::Engineering(e) => e,
    };
    let (sys, load_shift) = sys0.normalized();
    let eps0 = engineering_eps0(&sys, sched);
    let mut chain = ConjugationChain::identity();
    let mut steps = Vec::new();
    let mut eps = vec![eps0];
    let mut products = Vec::new();
    let mut increments = Vec::new();
    let mut current = sys;
    if n_max >= 1 {
        let (next, c, rep) = first_step(&current, sched, eps0, opts)?;
        increments.push(BoundCheck::new(
            "increment",
            c.cumulative_norm(),
            8.0 * eps0.powf(0.75),
        ));
        chain.extend(c);
        eps.push(rep.f_norm);
        products.push(chain.derivative_product());
        steps.push(rep);
        current = next;
    }
    for n in 2..=n_max {
        let t = opts.timing.then(Instant::now);
        let eps_prev = *eps.last().expect("non-empty");
        let inner = InnerOptions::from_schedule(sched);
        let a = step_a_eliminate(&current, n, sched, eps_prev, eps0, &opts.collocation)?;
        let b = step_b_reduce(&a.system, n, sched, eps_prev, &inner, &opts.collocation)?;
        let c = step_c_conjugate_back(&a, &b, n, sched, eps_prev, &opts.collocation)?;
        let prev_product = chain.derivative_product();
        increments.push(BoundCheck::new(
            "increment",
            prev_product * c.h_tilde_flat.declared_norm(),
            8.0 * eps_prev.powf(0.75),
        ));
        chain.extend(c.chain.clone());
        let next = c.system;
        let mut checks = a.checks;
        checks.extend(b.checks);
        checks.extend(c.checks);
        let rep = StepReport {
            n,
            q_n: a.q,
            s_n: next.class.s,
            r_n: next.class.r,
            g_norm: next.g_norm(),
            f_norm: next.f_norm(),
            g_mean: next.g.mean(),
            contracts_met: contracts(&b.passes, opts.collocation.tolerance)
                && a.composition_residual <= opts.collocation.tolerance,
            passes: b.passes,
            early_exit: b.early_exit,
            checks,
            wall_ms: elapsed(t),
        };
        eps.push(rep.f_norm);
        products.push(chain.derivative_product());
        steps.push(rep);
        current = next;
    }
    let bounds: Vec<f64> = (1..eps.len())
        .map(|n| eps[..n].iter().map(|e| 1.0 + 4.0 * e.powf(0.75)).product())
        .collect();
    let derivative_ok = products
        .iter()
        .zip(&bounds)
        .all(|(p, b)| p <= b && *b < 2.0);
    let mut smoothness = Vec::new();
    for (n, e) in eps.iter().enumerate().skip(1) {
        let q = sched.q_n(n + 1);
        for &j in &opts.derivative_orders {
            let lhs = 4.0 * j as f64 * q.ln() + 0.75 * e.ln();
            smoothness.push((n, j, *e == 0.0 || lhs < 0.5 * e.ln()));
        }
    }
    Ok(ReducibilityRun {
        chain,
        g_limit: current.g.clone(),
        system: current,
        steps,
        diagnostics: ConvergenceDiagnostics {
            derivative_products: products,
            derivative_bounds: bounds,
            derivative_ok,
            increments,
            smoothness,
        },
        load_shift,
        audit: None,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct AlmostReducibilityRun {
    /// Conjugation of each step; never inverted.
    pub step_chains: Vec<ConjugationChain>,
    /// System after each step.
    pub systems: Vec<QpfSystem>,
    /// All step conjugations composed.
    pub chain: ConjugationChain,
    pub steps: Vec<StepReport>,
    pub cumulative_norms: Vec<f64>,
    /// The cumulative chain norm never decreases.
    pub growth_monotone: bool,
    pub load_shift: f64,
}

/// Steps (a, b) for n = 1…n_max with the a-translations retained.
pub fn run_almost_reducibility(
    sys0: &QpfSystem,
    sched: &KamSchedule,
    n_max: usize,
    opts: &RunOptions,
) -> Result<AlmostReducibilityRun, KamError> {
    let sched = match sched {
        KamSchedule::PaperAudit(p) => {
            let run = paper_audit_only(sys0, p)?;
            return Ok(AlmostReducibilityRun {
                step_chains: Vec::new(),
                systems: vec![run.system],
                chain: run.chain,
                steps: Vec::new(),
                cumulative_norms: Vec::new(),
                growth_monotone: true,
                load_shift: run.load_shift,
            });
        }
        KamSchedule::Engineering(e) => e,
    };
    let (sys, load_shift) = sys0.normalized();
    let eps0 = engineering_eps0(&sys, sched);
    let mut out = AlmostReducibilityRun {
        step_chains: Vec::new(),
        systems: Vec::new(),
        chain: ConjugationChain::identity(),
        steps: Vec::new(),
        cumulative_norms: Vec::new(),
        growth_monotone: true,
        load_shift,
    };
    let mut current = sys;
    let mut eps_prev = eps0;
    for n in 1..=n_max {
        let (next, c, rep) = almost_step(&current, n, sched, eps_prev, eps0, opts)?;
        eps_prev = rep.f_norm;
        out.chain.extend(c.clone());
        out.cumulative_norms.push(out.chain.cumulative_norm());
        out.step_chains.push(c);
        out.systems.push(next.clone());
        out.steps.push(rep);
        current = next;
    }
    out.growth_monotone = out.cumulative_norms.windows(2).all(|w| w[0] <= w[1]);
    Ok(out)
}

fn almost_step(
    current: &QpfSystem,
    n: usize,
    sched: &EngineeringSchedule,
    eps_prev: f64,
    eps0: f64,
    opts: &RunOptions,
) -> Result<(QpfSystem, ConjugationChain, StepReport), KamError> {
    if n == 1 {
        return first_step(current, sched, eps0, opts);
    }
    let t = opts.timing.then(Instant::now);
    let a = step_a_eliminate(current, n, sched, eps_prev, eps0, &opts.collocation)?;
    let b = step_b_reduce(
        &a.system,
        n,
        sched,
        eps_prev,
        &InnerOptions::from_schedule(sched),
        &opts.collocation,
    )?;
    let mut c = ConjugationChain::identity();
    c.push(ChainElement::FiberTranslation { h: a.h.clone() });
    for e in &b.elements {
        c.push(ChainElement::NearIdentity { h: e.clone() });
    }
    let next = b.system.clone();
    let mut checks = a.checks.clone();
    checks.extend(b.checks.clone());
    checks.push(BoundCheck::new(
        "almost_step_norm",
        c.cumulative_norm(),
        a.q.powi(2) * eps0,
    ));
    let rep = StepReport {
        n,
        q_n: a.q,
        s_n: next.class.s,
        r_n: next.class.r,
        g_norm: next.g_norm(),
        f_norm: next.f_norm(),
        g_mean: next.g.mean(),
        contracts_met: contracts(&b.passes, opts.collocation.tolerance)
            && a.composition_residual <= opts.collocation.tolerance,
        passes: b.passes,
        early_exit: b.early_exit,
        checks,
        wall_ms: elapsed(t),
    };
    Ok((next, c, rep))
}

#[derive(Clone, Debug, Serialize)]
pub struct LinearizableApproximant {
    /// The linearizable system near the input.
    pub system: QpfSystem,
    /// Maps the rigid rotation θ̇ = `rotation` to `system`.
    pub chain: ConjugationChain,
    pub rotation: f64,
    /// N(ρ̃ + g + f − output) on the output strip.
    pub distance: f64,
    pub steps_used: usize,
    /// N(∂_ω h̃ − 𝒯 ḡ) for the reference-system linearization.
    pub reference_residual: f64,
    pub reports: Vec<StepReport>,
}

/// Splits a field into constant, φ-only and θ-dependent parts.
fn split_field(field: &TorusFunction, omega: [f64; 2], s: f64, r: f64) -> QpfSystem {
    let rho = field.mean().re;
    let phi = field.theta_mean();
    let g = phi.without_mean();
    let f = field.without_theta_mean().with_strips(s, r);
    QpfSystem::new(rho, g, f, omega, s, r)
}

/// Runs (a, b) steps until the reference system ρ̄̃ + 𝒯_{Q_N} ḡ, pushed
/// back to the original coordinates, lies within `target` of the input.
pub fn linearizable_approximant(
    sys0: &QpfSystem,
    sched: &EngineeringSchedule,
    target: f64,
    n_max: usize,
    opts: &RunOptions,
) -> Result<LinearizableApproximant, KamError> {
    let (sys, _) = sys0.normalized();
    let eps0 = engineering_eps0(&sys, sched);
    let original = sys0.field();
    let mut chain = ConjugationChain::identity();
    let mut current = sys;
    let mut eps_prev = eps0;
    let mut reports = Vec::new();
    let mut best = f64::INFINITY;
    for n in 1..=n_max.max(1) {
        let (next, c, rep) = almost_step(&current, n, sched, eps_prev, eps0, opts)?;
        eps_prev = rep.f_norm;
        chain.extend(c);
        reports.push(rep);
        current = next;

        let q = sched.q_n(n);
        let qt = if q >= u32::MAX as f64 {
            u32::MAX
        } else {
            q.max(1.0) as u32
        };
        let g_ref = current.g.without_mean().truncate(qt);
        let rotation = current.rho_tilde + current.g.mean();
        let (s, r) = (current.class.s, current.class.r);
        let reference = (&TorusFunction::constant(rotation) + g_ref.as_torus()).with_strips(s, r);
        let pushed = chain.pushforward(&reference, current.omega, &opts.collocation)?;
        let distance = (&original - &pushed).norm(s, r);
        best = best.min(distance);
        if distance < target {
            let h_ref = g_ref.solve_constant_coefficient(current.omega, u32::MAX)?;
            let reference_residual =
                (&h_ref.derive_omega(current.omega).into_torus() - g_ref.as_torus()).abs_sum();
            let mut lin = chain.clone();
            lin.push(ChainElement::FiberTranslation { h: h_ref });
            return Ok(LinearizableApproximant {
                system: split_field(&pushed, current.omega, s, r),
                chain: lin,
                rotation,
                distance,
                steps_used: n,
                reference_residual,
                reports,
            });
        }
    }
    Err(KamError::TargetUnreachable {
        achieved: best,
        target,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ModeLockedApproximant {
    pub system: QpfSystem,
    pub k: [i32; 2],
    /// |⟨k,ω⟩ − ρ|
    pub approximation_error: f64,
    /// ‖f̂ − ρ‖ bound on the real torus.
    pub bound: f64,
    /// Largest θ-strip width s on which the bound stays below ε/2 (φ-strip 0).
    pub s_max: f64,
}

/// `⟨k,ω⟩ + (ε/4π) sin(4π(θ − ⟨k,φ⟩))` with |⟨k,ω⟩ − ρ| small, searching
/// k in order of increasing |k|₁ up to `k_cap`.
pub fn mode_locked_approximant(
    rho: f64,
    omega: [f64; 2],
    eps: f64,
    k_cap: u32,
) -> Result<ModeLockedApproximant, KamError> {
    if !(eps > 0.0 && eps.is_finite() && rho.is_finite()) {
        return Err(KamError::InvalidInput(
            "ε must be positive and ρ finite".into(),
        ));
    }
    let amp = eps / (4.0 * PI);
    let tol = eps / 2.0 - amp;
    for m in 0..=k_cap as i32 {
        for k1 in -m..=m {
            let rest = m - k1.abs();
            let cands: &[i32] = if rest == 0 { &[0] } else { &[-rest, rest] };
            for &k2 in cands {
                let d = (k1 as f64 * omega[0] + k2 as f64 * omega[1] - rho).abs();
                if d < tol {
                    let kw = k1 as f64 * omega[0] + k2 as f64 * omega[1];
                    let f = TorusFunction::sin_mode(2, [-2 * k1, -2 * k2], amp);
                    let system = QpfSystem::new(kw, PhiFunction::zero(), f, omega, 0.0, 0.0);
                    let s_max = 0.5 * ((eps / 2.0 - d) / amp).ln();
                    return Ok(ModeLockedApproximant {
                        system,
                        k: [k1, k2],
                        approximation_error: d,
                        bound: d + amp,
                        s_max,
                    });
                }
            }
        }
    }
    Err(KamError::NotFound(format!(
        "no k with |k|₁ ≤ {k_cap} approximates ρ = {rho} within {tol:e}"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn golden() -> [f64; 2] {
        [1.0, (5f64.sqrt() - 1.0) / 2.0]
    }

    fn sched() -> EngineeringSchedule {
        EngineeringSchedule::new(0.1, 3.0, 1.0, 1.0, vec![1.0, 13.0, 377.0])
    }

    fn benchmark() -> QpfSystem {
        QpfSystem::new(
            2f64.sqrt() - 1.0,
            PhiFunction::zero(),
            TorusFunction::sin_mode(1, [1, 0], 1e-3),
            golden(),
            1.0,
            1.0,
        )
    }

    #[test]
    fn zero_system_gives_identity() {
        let sys = QpfSystem::new(
            0.3,
            PhiFunction::zero(),
            TorusFunction::zero(),
            golden(),
            1.0,
            1.0,
        );
        let run = run_rotations_reducibility(
            &sys,
            &KamSchedule::Engineering(sched()),
            3,
            &RunOptions::default(),
        )
        .unwrap();
        assert!(run.chain.is_empty());
        assert!(run.g_limit.is_zero());
    }

    #[test]
    fn benchmark_norms_decay() {
        let run = run_rotations_reducibility(
            &benchmark(),
            &KamSchedule::Engineering(sched()),
            3,
            &RunOptions::default(),
        )
        .unwrap();
        let norms: Vec<f64> = run.steps.iter().map(|s| s.f_norm).collect();
        let mut prev: f64 = 1e-3;
        for f in &norms {
            assert!(*f <= 10.0 * prev.powf(1.4), "{norms:?}");
            prev = *f;
        }
        assert!(run.contracts_met());
        assert!(run.diagnostics.derivative_ok);
    }

    #[test]
    fn almost_reducibility_single_low_mode() {
        let g = PhiFunction::from_torus(TorusFunction::cos_mode(0, [1, 0], 1e-4)).unwrap();
        let sys = QpfSystem::new(0.3, g, TorusFunction::zero(), golden(), 1.0, 1.0);
        let run = run_almost_reducibility(
            &sys,
            &KamSchedule::Engineering(sched()),
            3,
            &RunOptions::default(),
        )
        .unwrap();
        // step 1 does nothing; step 2 removes the mode; step 3 is stationary.
        assert!(run.step_chains[0].is_empty());
        assert_eq!(run.step_chains[1].len(), 1);
        assert!(run.step_chains[2].is_empty());
        assert!(run.systems[2].g.is_zero());
        assert!(run.growth_monotone);
    }

    #[test]
    fn linearizable_of_trig_polynomial_is_itself() {
        let g = PhiFunction::from_torus(TorusFunction::cos_mode(0, [1, 1], 1e-3)).unwrap();
        let sys = QpfSystem::new(0.3, g, TorusFunction::zero(), golden(), 1.0, 1.0);
        let lin =
            linearizable_approximant(&sys, &sched(), 1e-12, 2, &RunOptions::default()).unwrap();
        assert!(lin.distance < 1e-15, "{}", lin.distance);
        assert!(lin.reference_residual < 1e-14);
    }

    #[test]
    fn mode_locked_picks() {
        let w = golden();
        let m = mode_locked_approximant(w[1], w, 0.1, 50).unwrap();
        assert_eq!(m.k, [0, 1]);
        assert_eq!(m.approximation_error, 0.0);
        let m = mode_locked_approximant(0.0, w, 0.1, 50).unwrap();
        assert_eq!(m.k, [0, 0]);
        let m = mode_locked_approximant(0.5, w, 0.2, 50).unwrap();
        assert!(m.approximation_error < 0.1 && m.bound < 0.1);
        assert!(mode_locked_approximant(0.5, w, 1e-9, 3).is_err());
    }
}
