//! Sparse Fourier series on T¹ × T².
//!
//! Modes are `e^{2πi(lθ + k₁φ₁ + k₂φ₂)}`; the weighted majorant
//! `N_{s,r}(f) = Σ |f_l^k| e^{|l|s + |k|₁ r}` bounds the sup norm on the
//! complex strip `|Im θ| ≤ s/2π`, `|Im φ_j| ≤ r/2π`.

pub mod grid;
mod io;

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::ops::{Add, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use grid::{
    collocate, compose_fiber_shift, divide, pushforward_near_identity, Collocated,
    CollocationOptions, Composition, SliceTable,
};
pub use io::{ModeEntry, TorusFunctionFile};

const TWO_PI: f64 = 2.0 * PI;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("invalid function data: {0}")]
    InvalidFormat(String),
    #[error("coefficients violate Hermitian symmetry (relative defect {defect:e})")]
    NotHermitian { defect: f64 },
    #[error("function has θ-dependent modes where a φ-only function is required")]
    NotPhiFunction,
    #[error(
        "aliasing residual {residual:e} above tolerance {tolerance:e} at the largest allowed grid"
    )]
    InsufficientGrid { residual: f64, tolerance: f64 },
    #[error("shift norm {shift:e} exceeds the strip margin {margin:e}")]
    StripOverflow { shift: f64, margin: f64 },
    #[error("zero divisor at k = {k:?}")]
    ZeroDivisor { k: [i32; 2] },
    #[error("imaginary-part bound {bound:e} exceeds the limit {limit:e}")]
    BoundViolation { bound: f64, limit: f64 },
}

/// Mode index (l, k) with canonical order (|l|+|k|₁, l, k₁, k₂).
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub struct FourierIndex {
    pub l: i32,
    pub k: [i32; 2],
}

impl FourierIndex {
    pub const ZERO: FourierIndex = FourierIndex { l: 0, k: [0, 0] };

    pub fn new(l: i32, k1: i32, k2: i32) -> Self {
        Self { l, k: [k1, k2] }
    }

    pub fn degree(&self) -> u32 {
        self.l.unsigned_abs() + self.k_norm()
    }

    /// |k|₁
    pub fn k_norm(&self) -> u32 {
        self.k[0].unsigned_abs() + self.k[1].unsigned_abs()
    }

    pub fn neg(&self) -> Self {
        Self {
            l: -self.l,
            k: [-self.k[0], -self.k[1]],
        }
    }

    pub fn add(&self, o: &Self) -> Self {
        Self {
            l: self.l + o.l,
            k: [self.k[0] + o.k[0], self.k[1] + o.k[1]],
        }
    }

    /// ⟨k, ω⟩
    pub fn k_dot(&self, omega: [f64; 2]) -> f64 {
        self.k[0] as f64 * omega[0] + self.k[1] as f64 * omega[1]
    }

    /// exp(|l|s + |k|r)
    pub fn weight(&self, s: f64, r: f64) -> f64 {
        (self.l.unsigned_abs() as f64 * s + self.k_norm() as f64 * r).exp()
    }

    fn key(&self) -> (u32, i32, i32, i32) {
        (self.degree(), self.l, self.k[0], self.k[1])
    }
}

impl Ord for FourierIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

impl PartialOrd for FourierIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Analytic function on T¹ × T² as a finite Fourier series, with the strip
/// widths (s, r) it is declared on.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TorusFunction {
    modes: BTreeMap<FourierIndex, Complex64>,
    s: f64,
    r: f64,
}

impl TorusFunction {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self::from_modes([(FourierIndex::ZERO, Complex64::new(c, 0.0))])
    }

    /// Sums coefficients of repeated indices; exact zeros are dropped.
    pub fn from_modes<I: IntoIterator<Item = (FourierIndex, Complex64)>>(it: I) -> Self {
        let mut modes = BTreeMap::new();
        for (i, c) in it {
            *modes.entry(i).or_insert(Complex64::new(0.0, 0.0)) += c;
        }
        modes.retain(|_, c| *c != Complex64::new(0.0, 0.0));
        Self {
            modes,
            s: 0.0,
            r: 0.0,
        }
    }

    /// `amp · cos 2π(lθ + ⟨k,φ⟩)`
    pub fn cos_mode(l: i32, k: [i32; 2], amp: f64) -> Self {
        let i = FourierIndex { l, k };
        if i == FourierIndex::ZERO {
            return Self::constant(amp);
        }
        let c = Complex64::new(amp / 2.0, 0.0);
        Self::from_modes([(i, c), (i.neg(), c)])
    }

    /// `amp · sin 2π(lθ + ⟨k,φ⟩)`
    pub fn sin_mode(l: i32, k: [i32; 2], amp: f64) -> Self {
        let i = FourierIndex { l, k };
        if i == FourierIndex::ZERO {
            return Self::zero();
        }
        let c = Complex64::new(0.0, -amp / 2.0);
        Self::from_modes([(i, c), (i.neg(), c.conj())])
    }

    pub fn with_strips(mut self, s: f64, r: f64) -> Self {
        self.s = s;
        self.r = r;
        self
    }

    pub fn strips(&self) -> (f64, f64) {
        (self.s, self.r)
    }

    pub fn modes(&self) -> impl Iterator<Item = (&FourierIndex, &Complex64)> {
        self.modes.iter()
    }

    pub fn coef(&self, i: FourierIndex) -> Complex64 {
        self.modes.get(&i).copied().unwrap_or_default()
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.modes.is_empty()
    }

    /// Weighted majorant N_{s,r}.
    pub fn norm(&self, s: f64, r: f64) -> f64 {
        self.modes
            .iter()
            .map(|(i, c)| c.norm() * i.weight(s, r))
            .sum()
    }

    /// N at the declared strips.
    pub fn declared_norm(&self) -> f64 {
        self.norm(self.s, self.r)
    }

    /// Σ|c|, an upper bound for the sup norm on the real torus.
    pub fn abs_sum(&self) -> f64 {
        self.norm(0.0, 0.0)
    }

    pub fn max_abs_coef(&self) -> f64 {
        self.modes.values().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Largest |l|, |k₁|, |k₂| present.
    pub fn bandwidth(&self) -> [u32; 3] {
        let mut b = [0u32; 3];
        for i in self.modes.keys() {
            b[0] = b[0].max(i.l.unsigned_abs());
            b[1] = b[1].max(i.k[0].unsigned_abs());
            b[2] = b[2].max(i.k[1].unsigned_abs());
        }
        b
    }

    pub fn max_degree(&self) -> u32 {
        self.modes.keys().map(|i| i.degree()).max().unwrap_or(0)
    }

    pub fn mean(&self) -> Complex64 {
        self.coef(FourierIndex::ZERO)
    }

    /// Value at a real point.
    pub fn eval(&self, theta: f64, phi: [f64; 2]) -> f64 {
        self.eval_complex(
            Complex64::new(theta, 0.0),
            [Complex64::new(phi[0], 0.0), Complex64::new(phi[1], 0.0)],
        )
        .re
    }

    pub fn eval_complex(&self, theta: Complex64, phi: [Complex64; 2]) -> Complex64 {
        let i2pi = Complex64::new(0.0, TWO_PI);
        self.modes
            .iter()
            .map(|(i, c)| {
                let arg = theta * i.l as f64 + phi[0] * i.k[0] as f64 + phi[1] * i.k[1] as f64;
                c * (i2pi * arg).exp()
            })
            .sum()
    }

    /// Modes with l = 0, including the mean.
    pub fn theta_mean(&self) -> PhiFunction {
        PhiFunction(self.filter(|i| i.l == 0))
    }

    /// Modes with l ≠ 0.
    pub fn without_theta_mean(&self) -> TorusFunction {
        self.filter(|i| i.l != 0)
    }

    pub fn filter(&self, keep: impl Fn(&FourierIndex) -> bool) -> TorusFunction {
        TorusFunction {
            modes: self
                .modes
                .iter()
                .filter(|(i, _)| keep(i))
                .map(|(i, c)| (*i, *c))
                .collect(),
            s: self.s,
            r: self.r,
        }
    }

    /// 𝒯_N: modes with 0 < |k|+|l| < N.
    pub fn truncate(&self, n: u32) -> TorusFunction {
        self.filter(|i| {
            let d = i.degree();
            d > 0 && d < n
        })
    }

    /// ℛ_N: modes with |k|+|l| ≥ N.
    pub fn tail(&self, n: u32) -> TorusFunction {
        self.filter(|i| i.degree() >= n && i.degree() > 0)
    }

    pub fn map_coefs(&self, f: impl Fn(&FourierIndex, Complex64) -> Complex64) -> TorusFunction {
        TorusFunction::from_modes(self.modes.iter().map(|(i, c)| (*i, f(i, *c))))
            .with_strips(self.s, self.r)
    }

    /// ∂_ω: coefficient × 2πi⟨k,ω⟩.
    pub fn derive_omega(&self, omega: [f64; 2]) -> TorusFunction {
        self.map_coefs(|i, c| c * Complex64::new(0.0, TWO_PI * i.k_dot(omega)))
    }

    /// ∂_θ: coefficient × 2πil.
    pub fn derive_theta(&self) -> TorusFunction {
        self.map_coefs(|i, c| c * Complex64::new(0.0, TWO_PI * i.l as f64))
    }

    pub fn scale(&self, a: f64) -> TorusFunction {
        self.map_coefs(|_, c| c * a)
    }

    pub fn scale_complex(&self, a: Complex64) -> TorusFunction {
        self.map_coefs(|_, c| c * a)
    }

    /// Product with modes of degree ≥ `cutoff` split off.
    pub fn multiply(&self, g: &TorusFunction, cutoff: u32) -> Product {
        let full = self.mul_full(g);
        let kept = full.filter(|i| i.degree() < cutoff);
        let dropped = full.filter(|i| i.degree() >= cutoff);
        Product { kept, dropped }
    }

    /// Full convolution product.
    pub fn mul_full(&self, g: &TorusFunction) -> TorusFunction {
        let mut out: BTreeMap<FourierIndex, Complex64> = BTreeMap::new();
        for (i, a) in &self.modes {
            for (j, b) in &g.modes {
                *out.entry(i.add(j)).or_default() += a * b;
            }
        }
        out.retain(|_, c| *c != Complex64::new(0.0, 0.0));
        TorusFunction {
            modes: out,
            s: self.s.min(g.s),
            r: self.r.min(g.r),
        }
    }

    /// Drops coefficients with modulus ≤ `tol`.
    pub fn prune(&self, tol: f64) -> TorusFunction {
        let mut f = self.clone();
        f.modes.retain(|_, c| c.norm() > tol);
        f
    }

    /// max |f_{−i} − conj(f_i)| relative to the largest coefficient.
    pub fn hermitian_defect(&self) -> f64 {
        let scale = self.max_abs_coef();
        if scale == 0.0 {
            return 0.0;
        }
        self.modes
            .iter()
            .map(|(i, c)| (self.coef(i.neg()) - c.conj()).norm())
            .fold(0.0, f64::max)
            / scale
    }

    /// Replaces each pair by its Hermitian average, making the function
    /// exactly real-valued.
    pub fn symmetrize(&self) -> TorusFunction {
        let mut out = BTreeMap::new();
        for (i, c) in &self.modes {
            let m = 0.5 * (c + self.coef(i.neg()).conj());
            let m = if *i == FourierIndex::ZERO {
                Complex64::new(c.re, 0.0)
            } else {
                m
            };
            if m != Complex64::new(0.0, 0.0) {
                out.insert(*i, m);
                out.insert(i.neg(), m.conj());
            }
        }
        TorusFunction {
            modes: out,
            s: self.s,
            r: self.r,
        }
    }

    pub fn is_phi_only(&self) -> bool {
        self.modes.keys().all(|i| i.l == 0)
    }
}

impl Add for &TorusFunction {
    type Output = TorusFunction;
    fn add(self, o: &TorusFunction) -> TorusFunction {
        let mut f = TorusFunction::from_modes(
            self.modes
                .iter()
                .chain(o.modes.iter())
                .map(|(i, c)| (*i, *c)),
        );
        f.s = self.s.min(o.s);
        f.r = self.r.min(o.r);
        f
    }
}

impl Sub for &TorusFunction {
    type Output = TorusFunction;
    fn sub(self, o: &TorusFunction) -> TorusFunction {
        self + &(-o)
    }
}

impl Neg for &TorusFunction {
    type Output = TorusFunction;
    fn neg(self) -> TorusFunction {
        self.map_coefs(|_, c| -c)
    }
}

/// Product split at the cutoff degree.
#[derive(Clone, Debug)]
pub struct Product {
    pub kept: TorusFunction,
    pub dropped: TorusFunction,
}

/// Function of φ only (all modes have l = 0).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PhiFunction(TorusFunction);

impl PhiFunction {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self(TorusFunction::constant(c))
    }

    pub fn from_torus(f: TorusFunction) -> Result<Self, SpectralError> {
        if f.is_phi_only() {
            Ok(Self(f))
        } else {
            Err(SpectralError::NotPhiFunction)
        }
    }

    pub fn as_torus(&self) -> &TorusFunction {
        &self.0
    }

    pub fn into_torus(self) -> TorusFunction {
        self.0
    }

    /// ‖g‖_r = Σ|ĝ(k)| e^{|k|r}.
    pub fn norm(&self, r: f64) -> f64 {
        self.0.norm(0.0, r)
    }

    pub fn coef(&self, k: [i32; 2]) -> Complex64 {
        self.0.coef(FourierIndex { l: 0, k })
    }

    pub fn mean(&self) -> f64 {
        self.0.mean().re
    }

    pub fn without_mean(&self) -> PhiFunction {
        PhiFunction(self.0.filter(|i| *i != FourierIndex::ZERO))
    }

    pub fn truncate(&self, n: u32) -> PhiFunction {
        PhiFunction(self.0.truncate(n))
    }

    pub fn tail(&self, n: u32) -> PhiFunction {
        PhiFunction(self.0.tail(n))
    }

    pub fn derive_omega(&self, omega: [f64; 2]) -> PhiFunction {
        PhiFunction(self.0.derive_omega(omega))
    }

    pub fn eval(&self, phi: [f64; 2]) -> f64 {
        self.0.eval(0.0, phi)
    }

    pub fn add(&self, o: &PhiFunction) -> PhiFunction {
        PhiFunction(&self.0 + &o.0)
    }

    pub fn sub(&self, o: &PhiFunction) -> PhiFunction {
        PhiFunction(&self.0 - &o.0)
    }

    pub fn scale(&self, a: f64) -> PhiFunction {
        PhiFunction(self.0.scale(a))
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    /// Solves ∂_ω h = 𝒯_N g mode by mode: ĥ(k) = ĝ(k)/(2πi⟨k,ω⟩).
    pub fn solve_constant_coefficient(
        &self,
        omega: [f64; 2],
        n: u32,
    ) -> Result<PhiFunction, SpectralError> {
        let t = self.0.truncate(n);
        let mut modes = Vec::with_capacity(t.len());
        for (i, c) in t.modes() {
            let d = i.k_dot(omega);
            if d == 0.0 {
                return Err(SpectralError::ZeroDivisor { k: i.k });
            }
            modes.push((*i, c / Complex64::new(0.0, TWO_PI * d)));
        }
        Ok(PhiFunction(
            TorusFunction::from_modes(modes).with_strips(self.0.s, self.0.r),
        ))
    }

    /// For h from a real g, returns h₁ = h on the real torus and a bound on
    /// sup |h(φ₁ + iφ₂) − h(φ₁)| over |φ₂| ≤ r_target/2π, namely
    /// Σ|ĥ(k)|(e^{|k|r_target} − 1). Also bounds |Im h| on that strip.
    pub fn split_real_imaginary_shift(
        &self,
        r_target: f64,
        limit: Option<f64>,
    ) -> Result<(PhiFunction, f64), SpectralError> {
        let bound: f64 = self
            .0
            .modes()
            .map(|(i, c)| c.norm() * (i.k_norm() as f64 * r_target).exp_m1())
            .sum();
        if let Some(limit) = limit {
            if bound > limit {
                return Err(SpectralError::BoundViolation { bound, limit });
            }
        }
        Ok((self.clone(), bound))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn truncation_boundary() {
        let f = TorusFunction::from_modes([(FourierIndex::new(2, 1, 0), c(1.0, 0.0))]);
        assert!(f.truncate(3).is_zero());
        assert_eq!(f.tail(3), f);
        assert!(TorusFunction::constant(2.0).truncate(5).is_zero());
        assert!(TorusFunction::constant(2.0).tail(0).is_zero());
    }

    #[test]
    fn derive_examples() {
        let alpha = 0.618;
        // h = −cos(2πφ₁)/(2π) → ∂_ω h = sin(2πφ₁)
        let h = TorusFunction::cos_mode(0, [1, 0], -1.0 / TWO_PI);
        let d = h.derive_omega([1.0, alpha]);
        let want = TorusFunction::sin_mode(0, [1, 0], 1.0);
        assert!((&d - &want).abs_sum() < 1e-15);
        // sin 2πθ → 2π cos 2πθ
        let d = TorusFunction::sin_mode(1, [0, 0], 1.0).derive_theta();
        assert!((&d - &TorusFunction::cos_mode(1, [0, 0], TWO_PI)).abs_sum() < 1e-14);
        assert!(TorusFunction::cos_mode(0, [2, 1], 1.0)
            .derive_theta()
            .is_zero());
        assert!(TorusFunction::constant(3.0)
            .derive_omega([1.0, alpha])
            .is_zero());
    }

    #[test]
    fn multiply_examples() {
        let g = TorusFunction::from_modes([(FourierIndex::new(1, 2, -1), c(0.5, 0.25))]);
        assert_eq!(TorusFunction::constant(1.0).mul_full(&g), g);
        let f = TorusFunction::from_modes([(FourierIndex::new(-1, 1, 3), c(2.0, 0.0))]);
        let p = f.mul_full(&g);
        assert_eq!(p.len(), 1);
        assert_eq!(p.coef(FourierIndex::new(0, 3, 2)), c(1.0, 0.5));
        let split = f.multiply(&g, 5);
        assert!(split.kept.is_zero());
        assert_eq!(split.dropped, p);
    }

    #[test]
    fn constant_coefficient_examples() {
        let omega = [1.0, (5f64.sqrt() - 1.0) / 2.0];
        let g = PhiFunction::from_torus(TorusFunction::sin_mode(0, [1, 0], 1.0)).unwrap();
        let h = g.solve_constant_coefficient(omega, 10).unwrap();
        let want = TorusFunction::cos_mode(0, [1, 0], -1.0 / TWO_PI);
        assert!((h.as_torus() - &want).abs_sum() < 1e-16);
        let high = PhiFunction::from_torus(TorusFunction::cos_mode(0, [3, 4], 1.0)).unwrap();
        assert!(high.solve_constant_coefficient(omega, 7).unwrap().is_zero());
        // divisor α − 1
        let g = PhiFunction::from_torus(TorusFunction::sin_mode(0, [-1, 1], 1.0)).unwrap();
        let h = g.solve_constant_coefficient(omega, 10).unwrap();
        let i = FourierIndex::new(0, -1, 1);
        let want = g.coef(i.k) / Complex64::new(0.0, TWO_PI * (omega[1] - 1.0));
        assert_eq!(h.coef(i.k), want);
        let resid = &h.derive_omega(omega).into_torus() - &g.truncate(10).into_torus();
        assert!(resid.abs_sum() < 1e-15);
    }

    #[test]
    fn imaginary_shift_bound() {
        let omega = [1.0, (5f64.sqrt() - 1.0) / 2.0];
        let g = PhiFunction::from_torus(TorusFunction::cos_mode(0, [2, -1], 0.3)).unwrap();
        let h = g.solve_constant_coefficient(omega, 10).unwrap();
        let rbar = 0.2;
        let (h1, bound) = h.split_real_imaginary_shift(rbar, None).unwrap();
        for j in 0..50 {
            let x = j as f64 / 50.0;
            let v = h1
                .as_torus()
                .eval_complex(Complex64::new(0.0, 0.0), [c(x, 0.0), c(0.3 * x, 0.0)]);
            assert!(v.im.abs() < 1e-14);
        }
        let k = 3.0;
        let d = (2.0 - omega[1]).abs();
        let paper_form = 2.0 * 0.15 / d * k * rbar * (k * rbar).exp();
        assert!(bound <= paper_form);
        let y = rbar / TWO_PI;
        for j in 0..40 {
            let x = j as f64 / 40.0;
            for (a, b) in [(y, y), (-y, y), (y, -y), (-y, -y), (0.5 * y, -y)] {
                let z = h
                    .as_torus()
                    .eval_complex(c(0.0, 0.0), [c(x, a), c(0.7 * x, b)]);
                let re = h
                    .as_torus()
                    .eval_complex(c(0.0, 0.0), [c(x, 0.0), c(0.7 * x, 0.0)]);
                assert!((z - re).norm() <= bound * (1.0 + 1e-12));
            }
        }
        assert_eq!(
            PhiFunction::zero()
                .split_real_imaginary_shift(1.0, None)
                .unwrap()
                .1,
            0.0
        );
        assert!(h
            .split_real_imaginary_shift(rbar, Some(bound / 2.0))
            .is_err());
    }

    fn arb_function(max_modes: usize, band: i32) -> impl Strategy<Value = TorusFunction> {
        prop::collection::vec(
            (
                (-band..=band),
                (-band..=band),
                (-band..=band),
                -1.0f64..1.0,
                -1.0f64..1.0,
            ),
            0..max_modes,
        )
        .prop_map(|v| {
            let f = TorusFunction::from_modes(
                v.into_iter()
                    .map(|(l, a, b, re, im)| (FourierIndex::new(l, a, b), c(re, im))),
            );
            f.symmetrize()
        })
    }

    proptest! {
        #[test]
        fn partition_identity(f in arb_function(20, 4), n in 1u32..10) {
            let mean = TorusFunction::from_modes([(FourierIndex::ZERO, f.mean())]);
            let back = &(&mean + &f.truncate(n)) + &f.tail(n);
            prop_assert_eq!(back, f);
        }

        #[test]
        fn majorant_dominates_samples(f in arb_function(15, 3), s in 0.0f64..1.0, r in 0.0f64..1.0,
                                      pts in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0), 20)) {
            let n = f.norm(s, r);
            for (t, a, b, y0, y1, y2) in pts {
                let th = c(t, y0 * s / TWO_PI);
                let ph = [c(a, y1 * r / TWO_PI), c(b, y2 * r / TWO_PI)];
                prop_assert!(f.eval_complex(th, ph).norm() <= n + 1e-12);
            }
        }

        #[test]
        fn cauchy_estimate_modewise(f in arb_function(15, 5), s in 0.5f64..2.0, delta in 0.05f64..0.5) {
            let d = f.derive_theta();
            for (i, cf) in d.modes() {
                let l = i.l.unsigned_abs() as f64;
                prop_assert!(l * (-l * delta).exp() <= 1.0 / (std::f64::consts::E * delta) + 1e-15);
                let lhs = cf.norm() * i.weight(s - delta, 0.0);
                let rhs = TWO_PI / (std::f64::consts::E * delta) * f.coef(*i).norm() * i.weight(s, 0.0);
                prop_assert!(lhs <= rhs * (1.0 + 1e-12));
            }
            prop_assert!(d.norm(s - delta, 0.0) <= TWO_PI / (std::f64::consts::E * delta) * f.norm(s, 0.0) * (1.0 + 1e-12) + 1e-300);
        }

        #[test]
        fn submultiplicative(f in arb_function(10, 3), g in arb_function(10, 3), s in 0.0f64..1.0, r in 0.0f64..1.0) {
            let p = f.mul_full(&g);
            prop_assert!(p.norm(s, r) <= f.norm(s, r) * g.norm(s, r) * (1.0 + 1e-12) + 1e-300);
        }

        #[test]
        fn multiply_matches_dense_oracle(f in arb_function(8, 2), g in arb_function(8, 2), cutoff in 1u32..8) {
            // Dense accumulation in the same loop order.
            let b = 4i32;
            let side = (2 * b + 1) as usize;
            let mut dense = vec![c(0.0, 0.0); side * side * side];
            let idx = |i: FourierIndex| (((i.l + b) as usize) * side + (i.k[0] + b) as usize) * side + (i.k[1] + b) as usize;
            for (i, a) in f.modes() {
                for (j, bb) in g.modes() {
                    dense[idx(i.add(j))] += a * bb;
                }
            }
            let p = f.multiply(&g, cutoff);
            for l in -b..=b { for k1 in -b..=b { for k2 in -b..=b {
                let i = FourierIndex::new(l, k1, k2);
                if i.degree() < cutoff {
                    prop_assert_eq!(p.kept.coef(i), dense[idx(i)]);
                }
            }}}
        }
    }
}
