//! The three stages of one KAM step in engineering mode.

use serde::Serialize;

use super::{ChainElement, ConjugationChain, EngineeringSchedule, KamError, QpfSystem};
use crate::homological::{solve_homological, HomologicalError, HomologicalParams};
use crate::spectral::{
    compose_fiber_shift, divide, CollocationOptions, PhiFunction, TorusFunction,
};

/// Tolerance on the truncated homological equation, relative to N(f).
pub const EQUATION_TOL: f64 = 1e-10;

/// A measured quantity against its bound.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundCheck {
    pub name: String,
    pub actual: f64,
    pub bound: f64,
}

impl BoundCheck {
    pub fn new(name: &str, actual: f64, bound: f64) -> Self {
        Self {
            name: name.to_string(),
            actual,
            bound,
        }
    }

    pub fn holds(&self) -> bool {
        self.actual <= self.bound
    }

    /// actual / bound; at most 1 when the bound holds.
    pub fn ratio(&self) -> f64 {
        if self.bound == 0.0 {
            if self.actual == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            self.actual / self.bound
        }
    }
}

fn q_trunc(q: f64) -> u32 {
    if q >= u32::MAX as f64 {
        u32::MAX
    } else {
        q.max(1.0) as u32
    }
}

fn phi_with_strips(h: PhiFunction, r: f64) -> PhiFunction {
    PhiFunction::from_torus(h.into_torus().with_strips(0.0, r)).expect("φ-only input")
}

#[derive(Clone, Debug, Serialize)]
pub struct StepA {
    pub h: PhiFunction,
    pub system: QpfSystem,
    pub q: f64,
    pub h_norm: f64,
    /// Bound on sup |Im h| on the φ-strip r̄.
    pub imaginary_bound: f64,
    pub tail_norm: f64,
    pub mean_abs: f64,
    pub composition_residual: f64,
    pub checks: Vec<BoundCheck>,
}

/// Eliminates the non-resonant part 𝒯_{Q_n} g by a fiber translation.
///
/// `eps_prev` is ε_{n−1} and `eps0` is ε₀ (measured in engineering runs).
pub fn step_a_eliminate(
    sys: &QpfSystem,
    n: usize,
    sched: &EngineeringSchedule,
    eps_prev: f64,
    eps0: f64,
    opts: &CollocationOptions,
) -> Result<StepA, KamError> {
    let (s, r) = (sys.class.s, sys.class.r);
    let delta = sched.delta(n);
    let (s_bar, r_bar) = (s - delta / 3.0, r - sched.theta(n) / 3.0);
    let q = sched.q_n(n);
    let g_var = sys.g.without_mean();
    let h = phi_with_strips(
        g_var.solve_constant_coefficient(sys.omega, q_trunc(q))?,
        r_bar,
    );
    let (_, im) = h.split_real_imaginary_shift(r_bar, None)?;
    let f = sys.f.clone().with_strips(s, r);
    let comp = compose_fiber_shift(
        &f,
        &h.as_torus().clone().with_strips(s_bar, r_bar),
        &CollocationOptions {
            imaginary_bound: Some(im),
            ..opts.clone()
        },
    )?;
    let tail = g_var.tail(q_trunc(q));
    let g_new = tail.add(&PhiFunction::constant(sys.g.mean()));
    let h_norm = h.norm(r_bar);
    let tail_norm = tail.norm(r_bar);
    let mean_abs = sys.g.mean().abs();
    let checks = vec![
        BoundCheck::new("a_h_norm", h_norm, q.powf(1.75) * eps0.sqrt()),
        BoundCheck::new("a_imaginary_shift", im, delta / 3.0),
        BoundCheck::new("a_tail_norm", tail_norm, eps_prev.sqrt() / 3.0),
        BoundCheck::new("a_mean", mean_abs, 2.0 * eps_prev.sqrt() / 3.0),
    ];
    let mut system = sys.clone();
    system.g = g_new;
    system.f = comp.value.with_strips(s_bar, r_bar);
    system.class.s = s_bar;
    system.class.r = r_bar;
    Ok(StepA {
        h,
        system,
        q,
        h_norm,
        imaginary_bound: im,
        tail_norm,
        mean_abs,
        composition_residual: comp.residual,
        checks,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PassReport {
    pub pass: usize,
    pub k: u32,
    /// K was lowered below the schedule value to keep diagonal dominance.
    pub k_reduced: bool,
    pub f_norm_in: f64,
    pub f_norm_out: f64,
    /// η_ν = η^{(3/2)^ν}
    pub eta_bound: f64,
    pub h_norm: f64,
    pub theta_mean_norm: f64,
    pub equation_residual: f64,
    pub collocation_residual: f64,
    pub contraction_ok: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct StepB {
    /// Composition of the inner conjugations, θ = θ₊ + h̃(θ₊,φ).
    pub h_tilde: TorusFunction,
    /// The inner conjugations in order.
    pub elements: Vec<TorusFunction>,
    pub system: QpfSystem,
    pub passes: Vec<PassReport>,
    pub early_exit: bool,
    pub g_drift: f64,
    pub checks: Vec<BoundCheck>,
}

#[derive(Clone, Debug)]
pub struct InnerOptions {
    pub gamma: f64,
    pub tau: f64,
    pub passes: usize,
    pub k_cap: u32,
    /// Contraction failure is fatal instead of ending the loop.
    pub strict: bool,
}

impl InnerOptions {
    pub fn from_schedule(sched: &EngineeringSchedule) -> Self {
        Self {
            gamma: sched.gamma,
            tau: sched.tau,
            passes: sched.inner_passes,
            k_cap: sched.k_cap,
            strict: false,
        }
    }
}

fn solve_with_dominance(
    f: &TorusFunction,
    g: &PhiFunction,
    mut params: HomologicalParams,
    step: usize,
    pass: usize,
) -> Result<(crate::homological::HomologicalSolution, bool), KamError> {
    let mut reduced = false;
    loop {
        match solve_homological(f, g, &params) {
            Ok(sol) => return Ok((sol, reduced)),
            Err(HomologicalError::DominanceViolated { .. }) if params.k > 2 => {
                params.k = (params.k * 3 / 4).max(2);
                reduced = true;
            }
            Err(source) => return Err(KamError::Homological { step, pass, source }),
        }
    }
}

/// Inner loop of near-identity conjugations removing the θ-dependence of f
/// to quadratic order per pass.
///
/// Strips shrink by at most Δ_n/3 in θ and Θ_n/3 in φ, where Θ_n is the
/// engineering φ-loss.
pub fn step_b_reduce(
    sys: &QpfSystem,
    n: usize,
    sched: &EngineeringSchedule,
    eps_prev: f64,
    inner: &InnerOptions,
    opts: &CollocationOptions,
) -> Result<StepB, KamError> {
    let (s0, r0) = (sys.class.s, sys.class.r);
    let delta1 = sched.delta(n) / 6.0;
    let sigma1 = (sched.theta(n) / 12.0).min(delta1 / 2.0);
    let eta = 2.0 * eps_prev;
    let (mut s, mut r) = (s0, r0);
    let mut f = sys.f.clone().with_strips(s, r);
    let mut g = sys.g.clone();
    let mut h_tilde = TorusFunction::zero();
    let mut elements = Vec::new();
    let mut passes = Vec::new();
    let mut early_exit = false;
    for nu in 1..=inner.passes {
        let scale = 0.5f64.powi(nu as i32 - 1);
        let (delta, sigma) = (delta1 * scale, sigma1 * scale);
        if f.is_zero() {
            break;
        }
        let eta_prev = eta.powf(1.5f64.powi(nu as i32 - 1));
        let eta_nu = eta.powf(1.5f64.powi(nu as i32));
        let k_formula = if eta_prev < 1.0 {
            (-eta_prev.ln() / sigma).floor()
        } else {
            1.0
        };
        let k = (k_formula.min(inner.k_cap as f64) as u32).max(2);
        let mean = f.theta_mean();
        let f_solve = f.without_theta_mean().with_strips(s, r);
        let f_norm_in = f.norm(s, r);
        let (s_out, r_out) = (s - delta, r - sigma);
        let (h, dh, num, equation_residual, k_used, k_reduced) = if f_solve.is_zero() {
            (
                TorusFunction::zero(),
                TorusFunction::zero(),
                TorusFunction::zero(),
                0.0,
                k,
                false,
            )
        } else {
            let params = HomologicalParams {
                rho: sys.rho_tilde,
                omega: sys.omega,
                k,
                s,
                r,
                delta,
                sigma,
                gamma: inner.gamma,
                tau: inner.tau,
                eta: None,
                eta_tilde: None,
                waive: true,
            };
            let (sol, reduced) = solve_with_dominance(&f_solve, &g, params.clone(), n, nu)?;
            let k_used = if reduced { sol.audit.k } else { k };
            let h = sol.h.with_strips(s_out, r_out);
            let dh = h.derive_theta();
            let comp = compose_fiber_shift(&f, &h, opts)?;
            let num = &(&comp.difference + &sol.p_tilde) - &mean.as_torus().mul_full(&dh);
            (h, dh, num, sol.equation_residual, k_used, reduced)
        };
        let (f_new, coll_res) = if num.is_zero() {
            (TorusFunction::zero(), 0.0)
        } else {
            let q = divide(&num, &dh, opts)?;
            (q.function, q.residual)
        };
        let f_new = f_new.with_strips(s_out, r_out);
        let f_norm_out = f_new.norm(s_out, r_out);
        let contraction_ok = f_norm_out <= eta_nu;
        passes.push(PassReport {
            pass: nu,
            k: k_used,
            k_reduced,
            f_norm_in,
            f_norm_out,
            eta_bound: eta_nu,
            h_norm: h.norm(s_out, r_out),
            theta_mean_norm: mean.norm(r),
            equation_residual,
            collocation_residual: coll_res,
            contraction_ok,
        });
        if !contraction_ok && inner.strict {
            return Err(KamError::ContractionFailed {
                pass: nu,
                achieved: f_norm_out,
                bound: eta_nu,
            });
        }
        // h̃_ν = h̃_{ν−1} ∘ (id + h_ν) + h_ν
        if !h.is_zero() {
            let prev = compose_fiber_shift(
                &h_tilde,
                &h,
                &CollocationOptions {
                    margin: Some(f64::INFINITY),
                    ..opts.clone()
                },
            )?;
            h_tilde = (&prev.value + &h).with_strips(s_out, r_out);
            elements.push(h);
        }
        g = g.add(&mean);
        f = f_new;
        s = s_out;
        r = r_out;
        if !contraction_ok {
            early_exit = true;
            break;
        }
    }
    let (s_plus, r_plus) = (s0 - sched.delta(n) / 3.0, r0 - sched.theta(n) / 3.0);
    let h_tilde = h_tilde.with_strips(s_plus, r_plus);
    let g_drift = g.sub(&sys.g).norm(r_plus);
    let bound = 4.0 * eps_prev.powf(0.75);
    let checks = vec![
        BoundCheck::new("b_h_tilde_norm", h_tilde.declared_norm(), bound),
        BoundCheck::new(
            "b_h_tilde_derivative",
            h_tilde.derive_theta().declared_norm(),
            bound,
        ),
        BoundCheck::new("b_g_drift", g_drift, 4.0 * eps_prev),
    ];
    let mut system = sys.clone();
    system.g = g;
    system.f = f.with_strips(s_plus, r_plus);
    system.class.s = s_plus;
    system.class.r = r_plus;
    Ok(StepB {
        h_tilde,
        elements,
        system,
        passes,
        early_exit,
        g_drift,
        checks,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct StepC {
    pub system: QpfSystem,
    /// H ∘ H̄ ∘ H⁻¹ as elementary maps.
    pub chain: ConjugationChain,
    /// Displacement of the flattened map, h̃(θ₊ − h(φ), φ).
    pub h_tilde_flat: TorusFunction,
    pub checks: Vec<BoundCheck>,
}

/// Undoes the step-a translation: θ₊ = θ̄₊ + h(φ).
pub fn step_c_conjugate_back(
    h: &StepA,
    b: &StepB,
    n: usize,
    sched: &EngineeringSchedule,
    eps_prev: f64,
    opts: &CollocationOptions,
) -> Result<StepC, KamError> {
    let (s_n, r_n) = (
        b.system.class.s - sched.delta(n) / 3.0,
        b.system.class.r - sched.theta(n) / 3.0,
    );
    let minus_h = h.h.as_torus().scale(-1.0).with_strips(s_n, r_n);
    let shift_opts = CollocationOptions {
        imaginary_bound: Some(h.imaginary_bound),
        ..opts.clone()
    };
    let f_plus = compose_fiber_shift(&b.system.f, &minus_h, &shift_opts)?.value;
    let h_tilde = b.h_tilde.clone();
    let h_tilde_flat = compose_fiber_shift(&h_tilde, &minus_h, &shift_opts)?
        .value
        .with_strips(s_n, r_n);
    let mut system = b.system.clone();
    system.g = b.system.g.add(&h.h.derive_omega(system.omega));
    system.f = f_plus.with_strips(s_n, r_n);
    system.class.s = s_n;
    system.class.r = r_n;
    let mut chain = ConjugationChain::identity();
    chain.push(ChainElement::FiberTranslation { h: h.h.clone() });
    for e in &b.elements {
        chain.push(ChainElement::NearIdentity { h: e.clone() });
    }
    chain.push(ChainElement::FiberTranslation { h: h.h.scale(-1.0) });
    let bound = 4.0 * eps_prev.powf(0.75);
    let checks = vec![
        BoundCheck::new("c_displacement", h_tilde_flat.declared_norm(), bound),
        BoundCheck::new(
            "c_displacement_derivative",
            h_tilde_flat.derive_theta().declared_norm(),
            bound,
        ),
    ];
    Ok(StepC {
        system,
        chain,
        h_tilde_flat,
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    use crate::spectral::FourierIndex;

    fn golden() -> [f64; 2] {
        [1.0, (5f64.sqrt() - 1.0) / 2.0]
    }

    fn sched() -> EngineeringSchedule {
        EngineeringSchedule::new(0.1, 3.0, 1.0, 1.0, vec![1.0, 13.0, 377.0])
    }

    #[test]
    fn step_a_single_mode_exact() {
        let g = PhiFunction::from_torus(TorusFunction::cos_mode(0, [1, -1], 1e-4)).unwrap();
        let sys = QpfSystem::new(0.4, g.clone(), TorusFunction::zero(), golden(), 1.0, 1.0);
        let a = step_a_eliminate(
            &sys,
            1,
            &sched(),
            1e-4,
            1e-4,
            &CollocationOptions::default(),
        )
        .unwrap();
        assert!(a.system.g.is_zero() && a.system.f.is_zero());
        let i = FourierIndex::new(0, 1, -1);
        let want =
            g.coef([1, -1]) / Complex64::new(0.0, 2.0 * std::f64::consts::PI * i.k_dot(golden()));
        assert!((a.h.coef([1, -1]) - want).norm() < 1e-18);
    }

    #[test]
    fn step_a_high_modes_untouched() {
        let g = PhiFunction::from_torus(TorusFunction::cos_mode(0, [10, 5], 1e-4)).unwrap();
        let sys = QpfSystem::new(0.4, g.clone(), TorusFunction::zero(), golden(), 1.0, 1.0);
        let a = step_a_eliminate(
            &sys,
            1,
            &sched(),
            1e-4,
            1e-4,
            &CollocationOptions::default(),
        )
        .unwrap();
        assert!(a.h.is_zero());
        assert_eq!(a.system.g.as_torus().modes().count(), 2);
        assert!(a.system.class.s < 1.0 && a.system.class.r < 1.0);
    }

    #[test]
    fn step_b_zero_f_is_noop() {
        let sys = QpfSystem::new(
            0.4,
            PhiFunction::zero(),
            TorusFunction::zero(),
            golden(),
            1.0,
            1.0,
        );
        let s = sched();
        let b = step_b_reduce(
            &sys,
            1,
            &s,
            0.0,
            &InnerOptions::from_schedule(&s),
            &CollocationOptions::default(),
        )
        .unwrap();
        assert!(b.h_tilde.is_zero() && b.system.f.is_zero() && b.passes.is_empty());
    }

    #[test]
    fn step_b_first_pass_closed_form() {
        let eps = 1e-6;
        let rho = 2f64.sqrt() - 1.0;
        let f = TorusFunction::from_modes([(FourierIndex::new(1, 1, 0), Complex64::new(eps, 0.0))]);
        let sys = QpfSystem::new(rho, PhiFunction::zero(), f, golden(), 1.0, 1.0);
        let s = sched();
        let inner = InnerOptions {
            passes: 1,
            ..InnerOptions::from_schedule(&s)
        };
        let b = step_b_reduce(&sys, 1, &s, eps, &inner, &CollocationOptions::default()).unwrap();
        let want = Complex64::new(eps, 0.0)
            / Complex64::new(0.0, 2.0 * std::f64::consts::PI * (1.0 + rho));
        let got = b.elements[0].coef(FourierIndex::new(1, 1, 0));
        assert!((got - want).norm() <= 1e-15 * want.norm());
        let out = b.passes[0].f_norm_out;
        assert!(out < 100.0 * eps * eps, "{out}");
    }

    #[test]
    fn step_b_contracts_over_three_passes() {
        let eps = 1e-6;
        let f = TorusFunction::sin_mode(1, [1, 0], eps);
        let sys = QpfSystem::new(
            2f64.sqrt() - 1.0,
            PhiFunction::zero(),
            f,
            golden(),
            1.0,
            1.0,
        );
        let s = sched();
        let inner = InnerOptions {
            passes: 3,
            ..InnerOptions::from_schedule(&s)
        };
        let b = step_b_reduce(&sys, 1, &s, eps, &inner, &CollocationOptions::default()).unwrap();
        assert_eq!(b.passes.len(), 3);
        for p in &b.passes {
            let exponent = p.f_norm_out.ln() / p.f_norm_in.ln();
            assert!(exponent >= 1.4, "{p:?}");
            assert!(p.contraction_ok);
        }
    }

    #[test]
    fn step_c_with_zero_h_keeps_step_b() {
        let eps = 1e-5;
        let f = TorusFunction::sin_mode(1, [0, 1], eps);
        let sys = QpfSystem::new(0.3, PhiFunction::zero(), f, golden(), 1.0, 1.0);
        let s = sched();
        let opts = CollocationOptions::default();
        let a = step_a_eliminate(&sys, 1, &s, eps, eps, &opts).unwrap();
        let b = step_b_reduce(
            &a.system,
            1,
            &s,
            eps,
            &InnerOptions::from_schedule(&s),
            &opts,
        )
        .unwrap();
        let c = step_c_conjugate_back(&a, &b, 1, &s, eps, &opts).unwrap();
        assert_eq!(c.system.g, b.system.g);
        assert_eq!(c.system.f.modes().count(), b.system.f.modes().count());
        assert_eq!(c.chain.len(), b.elements.len());
    }
}
