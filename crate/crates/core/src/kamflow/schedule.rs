//! Step-size schedules: the certified paper schedule, evaluated in log
//! space, and the measured engineering schedule.

use serde::Serialize;

use super::KamError;
use crate::arithmetic::{
    compute_liouville_exponents, select_cd_sequence, validate_cd_sequence, Denominators, Frequency,
};
use crate::interval::{decimal_from_log10, Interval};

/// Decimal digits in printed ε₀ bounds.
const DECIMAL_DIGITS: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunMode {
    PaperAudit,
    Engineering,
}

/// One inequality `lhs < rhs`, both sides enclosed; `certified` when the
/// enclosures are disjoint in the right order.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CertifiedInequality {
    pub name: String,
    pub step: Option<usize>,
    /// Whether both sides are natural logarithms of the quantities compared.
    pub log_scale: bool,
    pub lhs: Interval,
    pub rhs: Interval,
    pub certified: bool,
}

impl CertifiedInequality {
    fn lt(name: &str, step: Option<usize>, log_scale: bool, lhs: Interval, rhs: Interval) -> Self {
        Self {
            name: name.to_string(),
            step,
            log_scale,
            lhs,
            rhs,
            certified: lhs.certainly_lt(&rhs),
        }
    }

    fn le(name: &str, step: Option<usize>, log_scale: bool, lhs: Interval, rhs: Interval) -> Self {
        Self {
            certified: lhs.certainly_le(&rhs),
            ..Self::lt(name, step, log_scale, lhs, rhs)
        }
    }
}

/// Schedule quantities of step n, as natural-log enclosures where the value
/// itself is out of f64 range.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PaperStep {
    pub n: usize,
    /// Index m with Q_n = q_m.
    pub cd_index: usize,
    pub ln_q: Interval,
    pub delta: Interval,
    pub s: Interval,
    pub ln_r: Interval,
    pub ln_inv_eps: Interval,
    pub ln_eps_tilde: Interval,
    /// ln of (γ²/(4ε_n))^{1/(2τ+3)}, whose floor is K^{(n)}.
    pub ln_k_arg: Interval,
    pub ln_r_bar: Interval,
    pub s_bar: Interval,
    pub ln_r_plus: Interval,
    pub s_plus: Interval,
    /// Inner passes N (upper end when the floor is not resolved).
    pub inner_passes: f64,
    /// ln of the largest inner truncation K_N.
    pub ln_k_inner_max: Interval,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PaperSchedule {
    pub gamma: f64,
    pub tau: f64,
    pub c: f64,
    pub c1: Interval,
    pub bridge_param: u32,
    pub u: Interval,
    pub s0: f64,
    pub r0: f64,
    pub ln_q_star: Interval,
    /// ln of the smallest of the three upper bounds on ε₀.
    pub ln_eps0_bound: Interval,
    pub eps0_bound_decimal: String,
    pub ln_eps0: Interval,
    pub eps0_decimal: String,
    /// Q_0, Q_1, … as denominator indices.
    pub cd_indices: Vec<usize>,
    /// ln ε_0 at index 0 of `steps` is not stored; `steps[n-1]` is step n.
    pub steps: Vec<PaperStep>,
    pub inequalities: Vec<CertifiedInequality>,
    pub certified: bool,
}

impl PaperSchedule {
    pub fn failures(&self) -> impl Iterator<Item = &CertifiedInequality> {
        self.inequalities.iter().filter(|i| !i.certified)
    }

    /// ln(1/ε_n) for n ≥ 0.
    pub fn ln_inv_eps(&self, n: usize) -> Interval {
        if n == 0 {
            -self.ln_eps0
        } else {
            self.steps[n - 1].ln_inv_eps
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PaperInputs {
    pub gamma: f64,
    pub tau: f64,
    pub s0: f64,
    pub r0: f64,
    pub bridge_param: u32,
    pub n_max: usize,
    /// ln ε₀; by default the bound minus ln 2.
    pub ln_eps0: Option<f64>,
    /// The constant c; by default 1.01 times its threshold 10(τ+3)/τ.
    pub c: Option<f64>,
    /// Initial denominator range; doubled until Q_{n_max+1} is selected.
    pub initial_depth: usize,
    pub max_depth: usize,
}

impl PaperInputs {
    pub fn new(gamma: f64, tau: f64, s0: f64, r0: f64, n_max: usize) -> Self {
        Self {
            gamma,
            tau,
            s0,
            r0,
            bridge_param: 8,
            n_max,
            ln_eps0: None,
            c: None,
            initial_depth: 4096,
            max_depth: 1 << 24,
        }
    }
}

/// Enclosure of ln Γ(x) for x > 0.
pub fn ln_gamma(x: f64) -> Interval {
    assert!(x > 0.0);
    let mut shift = Interval::point(0.0);
    let mut z = x;
    while z < 40.0 {
        shift = shift + Interval::point(z).ln();
        z += 1.0;
    }
    // Stirling series; the remainder after the z⁻⁵ term lies in (−1/(1680z⁷), 0).
    let zi = Interval::point(z);
    let half = Interval::point(0.5);
    let two_pi = Interval::pi() * 2.0;
    let z3 = zi * zi * zi;
    let z5 = z3 * zi * zi;
    let base = (zi - half) * zi.ln() - zi + half * two_pi.ln() + (zi * 12.0).recip()
        - (z3 * 360.0).recip()
        + (z5 * 1260.0).recip();
    let rem = (z5 * zi * zi * 1680.0).recip().hi();
    base + Interval::new(-rem, 0.0) - shift
}

/// ln Q_* for the threshold Q_* beyond which ln Q < a·Q^{1/4}, a > 0.
///
/// Returns [0, 0] when the inequality holds for every Q ≥ 1, along with the
/// two certificates F(y_lo) < 0 < F(y_hi) for F(y) = a e^{y/4} − y otherwise.
fn ln_q_star(a: Interval) -> (Interval, bool) {
    // F has its minimum at y₀ = 4 ln(4/a); no root when F(y₀) > 0.
    let four = Interval::point(4.0);
    let y0 = four * (four.div(&a)).ln();
    let f = |y: Interval| a * (y * 0.25).exp() - y;
    if y0.hi() <= 0.0 || f(y0).certainly_positive() {
        return (Interval::point(0.0), true);
    }
    // Largest root lies above y0; Newton from the right.
    let am = a.mid();
    let mut y = y0.mid().max(1.0) * 2.0;
    while am * (y / 4.0).exp() - y <= 0.0 {
        y *= 2.0;
    }
    for _ in 0..200 {
        let fy = am * (y / 4.0).exp() - y;
        let dy = am * (y / 4.0).exp() / 4.0 - 1.0;
        let next = y - fy / dy;
        if (next - y).abs() <= 1e-14 * y {
            y = next;
            break;
        }
        y = next;
    }
    let lo = y * (1.0 - 1e-12);
    let hi = y * (1.0 + 1e-12);
    let ok = f(Interval::point(lo)).hi() < 0.0 && f(Interval::point(hi)).certainly_positive();
    // Q_* = ⌈e^{y*}⌉ so ln Q_* ≤ y_hi + e^{−y_hi}.
    (Interval::new(lo, hi + (-hi).exp()), ok)
}

fn ln_q_of(den: &Denominators, idx: usize) -> Interval {
    den.ln_q(idx)
}

/// Builds and certifies the paper schedule for n = 1..=n_max.
pub fn certify_paper_schedule(
    freq: &Frequency,
    inp: &PaperInputs,
) -> Result<PaperSchedule, KamError> {
    let bad = |m: &str| KamError::InvalidInput(m.to_string());
    if !(inp.tau > 2.0) {
        return Err(bad("τ must exceed 2"));
    }
    if !(inp.gamma > 0.0 && inp.s0 > 0.0 && inp.r0 > 0.0) {
        return Err(bad("γ, s₀, r₀ must be positive"));
    }
    if inp.n_max == 0 {
        return Err(bad("n_max must be at least 1"));
    }
    let need_terms = inp.n_max + 2;
    let mut depth = inp.initial_depth.max(64);
    let (den, cd) = loop {
        let den = Denominators::from_frequency(freq, depth, depth.min(256))?;
        let cd = select_cd_sequence(&den, inp.bridge_param, Some(need_terms))?;
        if cd.indices.len() >= need_terms {
            break (den, cd);
        }
        if depth >= inp.max_depth {
            return Err(KamError::Arithmetic(
                crate::arithmetic::ArithmeticError::DepthInsufficient {
                    needed: depth * 2,
                    available: depth,
                },
            ));
        }
        depth = (depth * 2).min(inp.max_depth);
    };
    let mut ineq = Vec::new();
    let validation = validate_cd_sequence(&den, &cd);
    ineq.push(CertifiedInequality {
        name: "cd_sequence_valid".into(),
        step: None,
        log_scale: false,
        lhs: Interval::point(validation.failures.len() as f64),
        rhs: Interval::point(1.0),
        certified: validation.ok,
    });
    let q_idx = cd.indices.clone();
    let q0_one = den.ln_q(q_idx[0]);
    ineq.push(CertifiedInequality::le(
        "q0_is_one",
        None,
        true,
        q0_one,
        Interval::point(0.0),
    ));
    let lx = compute_liouville_exponents(&den, inp.bridge_param, Some(&cd))?;
    let u = lx.u;

    let tau = Interval::point(inp.tau);
    let strict_c = Interval::point(10.0) * (tau + 3.0).div(&tau);
    let c = inp.c.unwrap_or(1.01 * 10.0 * (inp.tau + 3.0) / inp.tau);
    let ci = Interval::point(c);
    ineq.push(CertifiedInequality::lt(
        "c_above_threshold",
        None,
        false,
        strict_c,
        ci,
    ));
    let ln3 = Interval::point(3.0).ln();
    let c1 = ci.div(&(Interval::point(32.0) * (tau + 3.0) * ln3));
    let ctu = ci * tau * u;

    // Q_*: threshold of ln Q < Q^{1/4} r₀/(40cτU).
    let a = Interval::point(inp.r0).div(&(Interval::point(40.0) * ctu));
    let (ln_qs, qs_ok) = ln_q_star(a);
    ineq.push(CertifiedInequality {
        name: "q_star_threshold".into(),
        step: None,
        log_scale: true,
        lhs: ln_qs,
        rhs: ln_qs,
        certified: qs_ok,
    });

    let ln_q = |n: usize| ln_q_of(&den, q_idx[n]);
    let lnfact = ln_gamma(inp.tau + 1.0);
    let b1 =
        Interval::point(12.0) * (tau + 3.0) * Interval::point(inp.r0 * inp.s0 * inp.gamma).ln()
            - lnfact
            - Interval::point(2.0) * ctu * ln_q(1);
    let b2 = -(Interval::point(2.0) * ctu);
    let b3 = -(Interval::point(40.0) * ln_qs * ln_qs * ctu);
    let bound = b1.min(&b2).min(&b3);
    let ln_eps0 = match inp.ln_eps0 {
        Some(v) => Interval::point(v),
        None => Interval::new(bound.lo(), bound.lo()) - Interval::ln2(),
    };
    ineq.push(CertifiedInequality::lt(
        "eps0_below_strip_bound",
        None,
        true,
        ln_eps0,
        b1,
    ));
    ineq.push(CertifiedInequality::lt(
        "eps0_below_exp_ctu",
        None,
        true,
        ln_eps0,
        b2,
    ));
    ineq.push(CertifiedInequality::lt(
        "eps0_below_q_star_bound",
        None,
        true,
        ln_eps0,
        b3,
    ));
    let l0 = -ln_eps0;
    let p = Interval::point(12.0) * (Interval::point(2.0) * tau + 3.0);
    // ln ln(1/ε₀) < ln(1/ε₀)/(12(2τ+3))
    ineq.push(CertifiedInequality::lt(
        "log_eps0_below_root",
        None,
        true,
        l0.ln(),
        l0.div(&p),
    ));

    let two_tau3 = Interval::point(2.0) * tau + 3.0;
    let ln_gamma2 = Interval::point(2.0) * Interval::point(inp.gamma).ln();
    let k_arg = |l_inv: Interval| (ln_gamma2 - Interval::point(4.0).ln() + l_inv).div(&two_tau3);
    let k_arg_half = |l_inv: Interval| (ln_gamma2 - Interval::ln2() + l_inv * 0.5).div(&two_tau3);

    let s0 = Interval::point(inp.s0);
    let r0 = Interval::point(inp.r0);
    let ln_r0 = r0.ln();
    let delta1 = s0.div(&Interval::point(10.0));
    let mut steps: Vec<PaperStep> = Vec::new();
    let mut s_prev = s0;
    let mut ln_r_prev = ln_r0;
    let mut l_prev = l0;
    let mut k_arg_prev = k_arg(l0);
    let mut eps_terms = vec![ln_eps0];
    #[allow(clippy::needless_range_loop)]
    for n in 1..=inp.n_max {
        let sn = Some(n);
        let lq = ln_q(n);
        let delta = delta1 * Interval::point(0.5f64.powi(n as i32 - 1));
        let s = s_prev - delta;
        let ln_r = ln_r0 - Interval::point(4.0).ln() - lq * 3.0;
        let exp_n = Interval::point(2f64.powi(n as i32 + 1));
        let l_n = l_prev + exp_n * ctu * ln_q(n + 1);
        // ε̃_n = Σ_{m<n} ε_m, enclosed relative to ε₀.
        let rel: Interval = eps_terms
            .iter()
            .skip(1)
            .fold(Interval::point(1.0), |acc, t| acc + (*t - ln_eps0).exp());
        let ln_eps_tilde = ln_eps0 + rel.ln();
        let k_a = k_arg(l_n);
        let ln_r_bar = ln_r0 - lq * 3.0;
        let s_bar = s_prev - delta.div(&Interval::point(3.0));
        let ln_r_plus = ln_r0 - Interval::ln2() - lq * 3.0;
        let s_plus = s_bar - delta.div(&Interval::point(3.0));

        // Inner loop: N = ⌊2ⁿc₁τU ln Q_n⌋ + 1 and K_N = 4·3^{N−1}Q_n³ ln(1/(2ε_{n−1}))/r₀.
        let nx = Interval::point(2f64.powi(n as i32)) * c1 * tau * u * lq;
        let n_inner = nx.floor().hi() + 1.0;
        let ln_inv_2eps = l_prev - Interval::ln2();
        let ln_kn = Interval::point(4.0).ln()
            + Interval::point(n_inner - 1.0) * ln3
            + lq * 3.0
            + ln_inv_2eps.ln()
            - ln_r0;
        let ln_kn_plus_one = ln_kn + Interval::new(0.0, (-ln_kn).exp().hi());

        ineq.push(CertifiedInequality::lt(
            "eps_decreasing",
            sn,
            true,
            -l_n,
            -l_prev,
        ));
        ineq.push(CertifiedInequality::lt(
            "s_decreasing",
            sn,
            false,
            s,
            s_prev,
        ));
        ineq.push(CertifiedInequality::lt(
            "s_positive",
            sn,
            false,
            Interval::point(0.0),
            s,
        ));
        ineq.push(CertifiedInequality::lt(
            "r_decreasing",
            sn,
            true,
            ln_r,
            ln_r_prev,
        ));
        ineq.push(CertifiedInequality::le(
            "k_nondecreasing",
            sn,
            true,
            k_arg_prev,
            k_a,
        ));
        ineq.push(CertifiedInequality::lt(
            "four_r_below_delta",
            sn,
            true,
            Interval::point(4.0).ln() + ln_r,
            delta.ln(),
        ));
        ineq.push(CertifiedInequality::lt(
            "r_bar_below_third_delta",
            sn,
            true,
            ln_r_bar,
            delta.div(&Interval::point(3.0)).ln(),
        ));
        ineq.push(CertifiedInequality::lt(
            "inner_k_below_k_prev",
            sn,
            true,
            ln_kn_plus_one,
            k_arg_prev,
        ));
        ineq.push(CertifiedInequality::lt(
            "inner_k_below_k_prev_sqrt_form",
            sn,
            true,
            ln_kn,
            k_arg_half(l_prev),
        ));

        steps.push(PaperStep {
            n,
            cd_index: q_idx[n],
            ln_q: lq,
            delta,
            s,
            ln_r,
            ln_inv_eps: l_n,
            ln_eps_tilde,
            ln_k_arg: k_a,
            ln_r_bar,
            s_bar,
            ln_r_plus,
            s_plus,
            inner_passes: n_inner,
            ln_k_inner_max: ln_kn,
        });
        eps_terms.push(-l_n);
        s_prev = s;
        ln_r_prev = ln_r;
        l_prev = l_n;
        k_arg_prev = k_a;
    }
    // s_n → s₀ − 2Δ₁ = 4s₀/5 > 0.
    let s_lim = s0 - delta1 * 2.0;
    ineq.push(CertifiedInequality::lt(
        "s_limit_positive",
        None,
        false,
        Interval::point(0.0),
        s_lim,
    ));

    let to_log10 = |x: Interval| x.div(&Interval::ln10());
    let certified = ineq.iter().all(|i| i.certified);
    Ok(PaperSchedule {
        gamma: inp.gamma,
        tau: inp.tau,
        c,
        c1,
        bridge_param: inp.bridge_param,
        u,
        s0: inp.s0,
        r0: inp.r0,
        ln_q_star: ln_qs,
        ln_eps0_bound: bound,
        eps0_bound_decimal: decimal_from_log10(to_log10(bound), true, DECIMAL_DIGITS),
        ln_eps0,
        eps0_decimal: decimal_from_log10(to_log10(ln_eps0), false, DECIMAL_DIGITS),
        cd_indices: q_idx,
        steps,
        inequalities: ineq,
        certified,
    })
}

/// Measured schedule for engineering runs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EngineeringSchedule {
    pub gamma: f64,
    pub tau: f64,
    pub s0: f64,
    pub r0: f64,
    /// ε₀; the measured N(f₀) when `None`.
    pub eps0: Option<f64>,
    /// Upper limit on every truncation degree.
    pub k_cap: u32,
    /// Inner passes per step.
    pub inner_passes: usize,
    /// Q_0, Q_1, …; later steps use no truncation of g.
    pub q: Vec<f64>,
}

impl EngineeringSchedule {
    pub fn new(gamma: f64, tau: f64, s0: f64, r0: f64, q: Vec<f64>) -> Self {
        Self {
            gamma,
            tau,
            s0,
            r0,
            eps0: None,
            k_cap: 64,
            inner_passes: 1,
            q,
        }
    }

    /// Q values of the CD sequence of an analyzed frequency.
    pub fn q_from_frequency(freq: &Frequency) -> Vec<f64> {
        use num_traits::ToPrimitive;
        freq.cd_sequence()
            .map(|cd| {
                cd.indices
                    .iter()
                    .map(|&i| freq.q(i).to_f64().unwrap_or(f64::INFINITY))
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn q_n(&self, n: usize) -> f64 {
        self.q.get(n).copied().unwrap_or(f64::INFINITY)
    }

    /// θ-strip loss Δ_n.
    pub fn delta(&self, n: usize) -> f64 {
        self.s0 / 10.0 / 2f64.powi(n as i32 - 1)
    }

    /// φ-strip loss, same geometric form as Δ_n.
    pub fn theta(&self, n: usize) -> f64 {
        self.r0 / 10.0 / 2f64.powi(n as i32 - 1)
    }

    pub fn s(&self, n: usize) -> f64 {
        (1..=n).fold(self.s0, |s, j| s - self.delta(j))
    }

    pub fn r(&self, n: usize) -> f64 {
        (1..=n).fold(self.r0, |r, j| r - self.theta(j))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum KamSchedule {
    PaperAudit(PaperSchedule),
    Engineering(EngineeringSchedule),
}

impl KamSchedule {
    pub fn mode(&self) -> RunMode {
        match self {
            KamSchedule::PaperAudit(_) => RunMode::PaperAudit,
            KamSchedule::Engineering(_) => RunMode::Engineering,
        }
    }
}
