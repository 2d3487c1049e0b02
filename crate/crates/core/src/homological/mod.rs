//! Approximate solution of `∂_ω h + (ρ + g(φ)) ∂_θ h = f` by per-θ-mode
//! diagonally dominant linear systems.
//!
//! For each `0 < |l| < K` the unknowns are `h_l^k`, `|k|₁ < K − |l|`, and the
//! system is `(A_l + G_l) h̄_l = f̄_l` with `A_l = diag(2πi(⟨k,ω⟩ + lρ))` and
//! `(G_l)_{pq} = 2πil ĝ(p − q)`. The mean `ĝ(0)` is moved into the diagonal,
//! so `ρ` below always means `ρ + ĝ(0)` and `g` the zero-mean part.

mod dense;

use std::collections::HashMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::spectral::{FourierIndex, PhiFunction, SpectralError, TorusFunction};

pub use dense::{dense_oracle_solve, DENSE_LIMIT};

const TWO_PI: f64 = 2.0 * PI;

/// Relative weighted-ℓ¹ update at which the Neumann iteration stops.
pub const NEUMANN_TOL: f64 = 1e-14;
const NEUMANN_MAX_ITERS: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HomologicalError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("f has a nonzero θ-mean (N = {norm:e})")]
    NonzeroThetaMean { norm: f64 },
    #[error("dominance violated at l = {l}, k = {k:?}: margin {margin:e}")]
    DominanceViolated { l: i32, k: [i32; 2], margin: f64 },
    #[error("preconditions failed: {0}")]
    PreconditionsFailed(String),
    #[error("Neumann iteration cannot converge at l = {l}: C = {c}")]
    NeumannDiverged { l: i32, c: f64 },
    #[error("certified bound exceeded for {which}: {actual:e} > {bound:e}")]
    BoundViolated {
        which: String,
        actual: f64,
        bound: f64,
    },
    #[error("singular matrix at pivot {0}")]
    Singular(usize),
    #[error("lattice of size {0} exceeds the dense oracle limit")]
    LatticeTooLarge(usize),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

/// Linear system for one θ-mode.
#[derive(Clone, Debug)]
pub struct ModeSystem {
    pub l: i32,
    pub k_trunc: u32,
    /// Lattice of k with |k|₁ < K − |l|, ordered by (|k|, k₁, k₂).
    pub lattice: Vec<[i32; 2]>,
    /// Diagonal 2πi(⟨k,ω⟩ + lρ).
    pub diag: Vec<Complex64>,
    /// Unscaled divisors ⟨k,ω⟩ + lρ.
    pub divisors: Vec<f64>,
    /// Sparse rows of G: (column, entry).
    pub rows: Vec<Vec<(usize, Complex64)>>,
    pub r_prime: f64,
}

/// Lattice {k : |k|₁ < m} in canonical order.
pub fn lattice(m: u32) -> Vec<[i32; 2]> {
    let m = m as i32;
    let mut out = Vec::new();
    for d in 0..m {
        for k1 in -d..=d {
            let rest = d - k1.abs();
            if rest == 0 {
                out.push([k1, 0]);
            } else {
                out.push([k1, -rest]);
                out.push([k1, rest]);
            }
        }
    }
    out
}

fn knorm(k: [i32; 2]) -> f64 {
    (k[0].abs() + k[1].abs()) as f64
}

impl ModeSystem {
    /// `g` must have zero mean.
    pub fn build(
        l: i32,
        k_trunc: u32,
        g: &PhiFunction,
        rho: f64,
        omega: [f64; 2],
        r_prime: f64,
    ) -> Self {
        assert!(l != 0 && l.unsigned_abs() < k_trunc);
        let lattice = lattice(k_trunc - l.unsigned_abs());
        let index: HashMap<[i32; 2], usize> =
            lattice.iter().enumerate().map(|(i, k)| (*k, i)).collect();
        let divisors: Vec<f64> = lattice
            .iter()
            .map(|k| k[0] as f64 * omega[0] + k[1] as f64 * omega[1] + l as f64 * rho)
            .collect();
        let diag = divisors
            .iter()
            .map(|d| Complex64::new(0.0, TWO_PI * d))
            .collect();
        let gl: Vec<([i32; 2], Complex64)> = g
            .as_torus()
            .modes()
            .filter(|(i, _)| **i != FourierIndex::ZERO)
            .map(|(i, c)| (i.k, c * Complex64::new(0.0, TWO_PI * l as f64)))
            .collect();
        let rows = lattice
            .iter()
            .map(|p| {
                let mut row: Vec<(usize, Complex64)> = gl
                    .iter()
                    .filter_map(|(s, c)| index.get(&[p[0] - s[0], p[1] - s[1]]).map(|&q| (q, *c)))
                    .collect();
                row.sort_by_key(|e| e.0);
                row
            })
            .collect();
        Self {
            l,
            k_trunc,
            lattice,
            diag,
            divisors,
            rows,
            r_prime,
        }
    }

    pub fn len(&self) -> usize {
        self.lattice.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lattice.is_empty()
    }

    /// C(Ã⁻¹G̃) = Σ_p max_q |G_pq| e^{(|p|−|q|)r′} / |A_p|.
    pub fn c_value(&self) -> f64 {
        self.rows
            .iter()
            .enumerate()
            .map(|(p, row)| {
                let kp = knorm(self.lattice[p]);
                row.iter()
                    .map(|(q, c)| c.norm() * ((kp - knorm(self.lattice[*q])) * self.r_prime).exp())
                    .fold(0.0, f64::max)
                    / self.diag[p].norm()
            })
            .sum()
    }

    /// ℓ¹ operator norm of G̃ (largest weighted column sum).
    pub fn g_tilde_norm(&self) -> f64 {
        let mut cols = vec![0.0; self.len()];
        for (p, row) in self.rows.iter().enumerate() {
            let kp = knorm(self.lattice[p]);
            for (q, c) in row {
                cols[*q] += c.norm() * ((kp - knorm(self.lattice[*q])) * self.r_prime).exp();
            }
        }
        cols.into_iter().fold(0.0, f64::max)
    }

    pub fn apply_g(&self, x: &[Complex64]) -> Vec<Complex64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|(q, c)| c * x[*q]).sum())
            .collect()
    }

    /// Normalized weights e^{(|k| − max|k|)r′}; the relative stopping test
    /// is invariant under the common scale.
    fn weights(&self) -> Vec<f64> {
        let kmax = self.lattice.iter().map(|k| knorm(*k)).fold(0.0, f64::max);
        self.lattice
            .iter()
            .map(|k| ((knorm(*k) - kmax) * self.r_prime).exp())
            .collect()
    }

    /// Iterates x ← A⁻¹(rhs − Gx). Returns the solution and iteration count.
    pub fn neumann_solve(&self, rhs: &[Complex64]) -> Option<(Vec<Complex64>, usize)> {
        let w = self.weights();
        let mut x: Vec<Complex64> = rhs.iter().zip(&self.diag).map(|(f, a)| f / a).collect();
        if self.rows.iter().all(|r| r.is_empty()) {
            return Some((x, 0));
        }
        for it in 1..=NEUMANN_MAX_ITERS {
            let gx = self.apply_g(&x);
            let next: Vec<Complex64> = rhs
                .iter()
                .zip(&gx)
                .zip(&self.diag)
                .map(|((f, g), a)| (f - g) / a)
                .collect();
            let (mut du, mut nu) = (0.0, 0.0);
            for i in 0..next.len() {
                du += (next[i] - x[i]).norm() * w[i];
                nu += next[i].norm() * w[i];
            }
            x = next;
            if !du.is_finite() {
                return None;
            }
            if du <= NEUMANN_TOL * nu || nu == 0.0 {
                return Some((x, it));
            }
        }
        None
    }
}

/// Audit of the solvability conditions.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PreconditionAudit {
    /// ⌊ln(1/η̃)/σ⌋
    pub k_formula: f64,
    pub k: u32,
    pub k_matches: bool,
    /// (γ²/η)^{1/(2τ+3)}
    pub k_limit: f64,
    pub cond_k: bool,
    pub tau_ok: bool,
    /// min over 0 < |k|+|l| < K, l ≠ 0 of |⟨k,ω⟩ + lρ| − (|l|(K−|l|)²‖g‖)^{1/2}
    pub dominance_margin: f64,
    pub dominance_witness: (i32, i32, i32),
    pub dominance_ok: bool,
    pub pass: bool,
}

/// Evaluates the K condition and the per-mode dominance inequality.
#[allow(clippy::too_many_arguments)]
pub fn check_preconditions(
    eta: f64,
    eta_tilde: f64,
    sigma: f64,
    gamma: f64,
    tau: f64,
    k: u32,
    rho: f64,
    omega: [f64; 2],
    g_norm: f64,
) -> PreconditionAudit {
    let k_formula = ((1.0 / eta_tilde).ln() / sigma).floor();
    let k_matches = k_formula == k as f64;
    let e = 2.0 * tau + 3.0;
    let k_limit = (gamma * gamma / eta).powf(1.0 / e);
    // K < (γ²/η)^{1/(2τ+3)}  ⇔  η·K^{2τ+3} < γ²
    let cond_k = eta * (k as f64).powf(e) < gamma * gamma;
    let (dominance_margin, dominance_witness) = dominance_margin(k, rho, omega, g_norm);
    let dominance_ok = dominance_margin > 0.0;
    let tau_ok = tau > 2.0;
    PreconditionAudit {
        k_formula,
        k,
        k_matches,
        k_limit,
        cond_k,
        tau_ok,
        dominance_margin,
        dominance_witness,
        dominance_ok,
        pass: k_matches && cond_k && dominance_ok && tau_ok,
    }
}

/// Smallest dominance margin and its (k₁, k₂, l).
pub fn dominance_margin(k: u32, rho: f64, omega: [f64; 2], g_norm: f64) -> (f64, (i32, i32, i32)) {
    let mut best = (f64::INFINITY, (0, 0, 0));
    for l in 1..k as i32 {
        let m = k as i32 - l;
        let need = (l as f64 * (m as f64).powi(2) * g_norm).sqrt();
        for kk in lattice(m as u32) {
            // (k,l) and (−k,−l) give the same value
            let d = (kk[0] as f64 * omega[0] + kk[1] as f64 * omega[1] + l as f64 * rho).abs();
            let margin = d - need;
            if margin < best.0 {
                best = (margin, (kk[0], kk[1], l));
            }
        }
    }
    best
}

/// Inputs of one homological solve.
#[derive(Clone, Debug, Serialize)]
pub struct HomologicalParams {
    pub rho: f64,
    pub omega: [f64; 2],
    pub k: u32,
    pub s: f64,
    pub r: f64,
    pub delta: f64,
    pub sigma: f64,
    pub gamma: f64,
    pub tau: f64,
    /// Bound η on ‖g‖_r; the measured norm when `None`.
    pub eta: Option<f64>,
    /// Bound η̃ on N_{s,r}(f); the measured norm when `None`.
    pub eta_tilde: Option<f64>,
    /// When set, the K condition may fail; per-mode dominance and
    /// convergence are still required, and bounds are reported only.
    pub waive: bool,
}

impl HomologicalParams {
    /// δ = s/10, σ = δ/2.
    pub fn with_default_widths(
        rho: f64,
        omega: [f64; 2],
        k: u32,
        s: f64,
        r: f64,
        gamma: f64,
        tau: f64,
    ) -> Self {
        let delta = s / 10.0;
        Self {
            rho,
            omega,
            k,
            s,
            r,
            delta,
            sigma: delta / 2.0,
            gamma,
            tau,
            eta: None,
            eta_tilde: None,
            waive: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModeDiagnostics {
    pub l: i32,
    pub lattice_size: usize,
    pub min_margin: f64,
    pub c_value: f64,
    pub g_tilde_norm: f64,
    pub neumann_iters: usize,
    pub h_norm: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct HomologicalSolution {
    pub h: TorusFunction,
    pub p_tilde: TorusFunction,
    /// ρ + ĝ(0), the diagonal frequency actually used.
    pub rho_eff: f64,
    pub audit: PreconditionAudit,
    pub modes: Vec<ModeDiagnostics>,
    pub h_norm: f64,
    pub h_bound: f64,
    pub p_norm: f64,
    pub p_bound: f64,
    /// N of the truncated-equation residual relative to N(f).
    pub equation_residual: f64,
    pub certified: bool,
}

impl HomologicalSolution {
    pub fn h_ratio(&self) -> f64 {
        self.h_norm / self.h_bound
    }

    pub fn p_ratio(&self) -> f64 {
        self.p_norm / self.p_bound
    }
}

type ModeSolution = (Vec<(FourierIndex, Complex64)>, ModeDiagnostics);

/// Solves the truncated equation
/// `∂_ω h + ρ ∂_θ h + 𝒯_K(g ∂_θ h) = 𝒯_K f` and returns h with
/// `P̃ = ℛ_K(−g ∂_θ h + f)`.
pub fn solve_homological(
    f: &TorusFunction,
    g: &PhiFunction,
    p: &HomologicalParams,
) -> Result<HomologicalSolution, HomologicalError> {
    let bad = |m: &str| HomologicalError::InvalidInput(m.to_string());
    if p.k < 1 {
        return Err(bad("K must be at least 1"));
    }
    if !(p.sigma > 0.0 && p.sigma <= p.delta / 2.0 && p.delta <= p.s && p.sigma < p.r) {
        return Err(bad("widths must satisfy 0 < σ ≤ δ/2, δ ≤ s, σ < r"));
    }
    let mean = f.theta_mean();
    let scale = f.max_abs_coef();
    if mean.as_torus().max_abs_coef() > 1e-14 * scale.max(f64::MIN_POSITIVE) {
        return Err(HomologicalError::NonzeroThetaMean {
            norm: mean.as_torus().abs_sum(),
        });
    }
    let f = f.without_theta_mean();
    let rho_eff = p.rho + g.mean();
    let g_var = g.without_mean();
    let r_prime = p.r - p.sigma;
    let g_norm = g_var.norm(p.r);
    let eta = p.eta.unwrap_or(g_norm);
    let eta_tilde = p.eta_tilde.unwrap_or_else(|| f.norm(p.s, p.r));
    let audit = check_preconditions(
        eta, eta_tilde, p.sigma, p.gamma, p.tau, p.k, rho_eff, p.omega, g_norm,
    );
    if !audit.dominance_ok {
        let (k1, k2, l) = audit.dominance_witness;
        return Err(HomologicalError::DominanceViolated {
            l,
            k: [k1, k2],
            margin: audit.dominance_margin,
        });
    }
    if !p.waive && !audit.pass {
        return Err(HomologicalError::PreconditionsFailed(format!(
            "K = {} vs ⌊ln(1/η̃)/σ⌋ = {}, K limit {:.6}, τ = {}",
            p.k, audit.k_formula, audit.k_limit, p.tau
        )));
    }

    let (s_out, r_out) = (p.s - p.delta, r_prime);
    let ls: Vec<i32> = (1..p.k as i32).flat_map(|l| [-l, l]).collect();
    let solved: Vec<Result<ModeSolution, HomologicalError>> = ls
        .par_iter()
        .map(|&l| {
            let sys = ModeSystem::build(l, p.k, &g_var, rho_eff, p.omega, r_prime);
            let c = sys.c_value();
            if c >= 0.5 {
                return Err(HomologicalError::NeumannDiverged { l, c });
            }
            let rhs: Vec<Complex64> = sys
                .lattice
                .iter()
                .map(|k| f.coef(FourierIndex { l, k: *k }))
                .collect();
            let (x, iters) = if rhs.iter().all(|z| *z == Complex64::new(0.0, 0.0)) {
                (rhs.clone(), 0)
            } else {
                sys.neumann_solve(&rhs)
                    .ok_or(HomologicalError::NeumannDiverged { l, c })?
            };
            let need =
                (l.unsigned_abs() as f64 * ((p.k - l.unsigned_abs()) as f64).powi(2) * g_norm)
                    .sqrt();
            let min_margin = sys
                .divisors
                .iter()
                .map(|d| d.abs() - need)
                .fold(f64::INFINITY, f64::min);
            let modes: Vec<(FourierIndex, Complex64)> = sys
                .lattice
                .iter()
                .zip(x)
                .map(|(k, v)| (FourierIndex { l, k: *k }, v))
                .collect();
            let h_norm = modes
                .iter()
                .map(|(i, v)| v.norm() * i.weight(s_out, r_out))
                .sum();
            let diag = ModeDiagnostics {
                l,
                lattice_size: sys.len(),
                min_margin,
                c_value: c,
                g_tilde_norm: sys.g_tilde_norm(),
                neumann_iters: iters,
                h_norm,
            };
            Ok((modes, diag))
        })
        .collect();
    let mut all_modes = Vec::new();
    let mut diags = Vec::new();
    for r in solved {
        let (m, d) = r?;
        all_modes.extend(m);
        diags.push(d);
    }
    diags.sort_by_key(|d| (d.l.abs(), d.l));
    let mut h = TorusFunction::from_modes(all_modes).with_strips(s_out, r_out);
    if f.hermitian_defect() <= 1e-12 {
        h = h.symmetrize();
    }
    let dh = h.derive_theta();
    let gdh = g.as_torus().mul_full(&dh);
    let p_tilde = (&(-&gdh) + &f).tail(p.k).with_strips(s_out, r_out);

    // Truncated-equation residual.
    let lhs = &(&h.derive_omega(p.omega) + &dh.scale(p.rho)) + &gdh.truncate(p.k);
    let resid = &lhs - &f.truncate(p.k);
    let f_norm = f.norm(p.s, p.r);
    let equation_residual = if f_norm > 0.0 {
        resid.norm(s_out, r_out) / f_norm
    } else {
        0.0
    };

    let h_norm = h.norm(s_out, r_out);
    let p_norm = p_tilde.norm(s_out, r_out);
    let h_bound = 2.0 * eta_tilde / (p.gamma * p.sigma.powf(2.0 + p.tau));
    let p_bound = 4.0 * eta_tilde * eta_tilde / (p.gamma * p.sigma.powf(3.0 + p.tau));
    let certified = audit.pass;
    if certified {
        if h_norm > h_bound {
            return Err(HomologicalError::BoundViolated {
                which: "N(h)".into(),
                actual: h_norm,
                bound: h_bound,
            });
        }
        if p_norm > p_bound {
            return Err(HomologicalError::BoundViolated {
                which: "N(P̃)".into(),
                actual: p_norm,
                bound: p_bound,
            });
        }
    }
    Ok(HomologicalSolution {
        h,
        p_tilde,
        rho_eff,
        audit,
        modes: diags,
        h_norm,
        h_bound,
        p_norm,
        p_bound,
        equation_residual,
        certified,
    })
}
