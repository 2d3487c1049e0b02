//! Numerical ground truth: RK4 integration of fiber flows, rotation
//! numbers, conjugacy defects, projective sl(2,R) flows and mode-locking
//! scans.

mod sl2;

pub use sl2::{lyapunov_exponent, projective_flow, LyapunovEstimate, ProjectiveField, Sl2Flow};

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::kamflow::{ConjugationChain, QpfSystem};
use crate::spectral::TorusFunction;

const TWO_PI: f64 = 2.0 * PI;

/// Largest admissible local-error estimate per unit time.
pub const STEP_ERROR_LIMIT: f64 = 1e-8;

/// Floor on rotation-number error bars: the resolution of the integrator.
pub const ERROR_FLOOR: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("step control failed: local error {estimate:e} per unit time; reduce dt")]
    StepControlFailure { estimate: f64 },
    #[error(
        "rotation-number estimates disagree across starts: {estimates:?} (error bar {error:e})"
    )]
    InconsistentStarts { estimates: Vec<f64>, error: f64 },
    #[error("matrix field has nonzero trace {max:e}")]
    TraceNonzero { max: f64 },
    #[error("projective flow validation failed: discrepancy {discrepancy:e}")]
    ValidationFailed { discrepancy: f64 },
}

/// θ̇ = F(θ, φ) with φ̇ = ω.
pub trait FiberField: Sync {
    fn eval(&self, theta: f64, phi: [f64; 2]) -> f64;
    fn omega(&self) -> [f64; 2];
    /// Upper bound on sup |F − mean of F|, for plain error bars.
    fn c0_size(&self) -> f64;
}

/// Real trigonometric sum evaluated from one representative of each
/// conjugate pair.
#[derive(Clone, Debug)]
pub struct CompiledField {
    constant: f64,
    terms: Vec<(f64, f64, f64, f64, f64)>,
    omega: [f64; 2],
    c0: f64,
}

impl CompiledField {
    pub fn new(f: &TorusFunction, omega: [f64; 2]) -> Self {
        let mut constant = 0.0;
        let mut terms = Vec::new();
        for (i, c) in f.modes() {
            let key = (i.l, i.k[0], i.k[1]);
            if key == (0, 0, 0) {
                constant += c.re;
            } else if key > (0, 0, 0) {
                // c e^{ix} + conj(c) e^{-ix} = 2 Re(c e^{ix})
                let conj = f.coef(i.neg());
                let (re, im) = (c.re + conj.re, c.im - conj.im);
                terms.push((i.l as f64, i.k[0] as f64, i.k[1] as f64, re, im));
            } else if f.coef(i.neg()) == num_complex::Complex64::new(0.0, 0.0) {
                // partner absent: contributes Re(c e^{ix}) only
                let n = i.neg();
                terms.push((n.l as f64, n.k[0] as f64, n.k[1] as f64, c.re, -c.im));
            }
        }
        let c0 = terms.iter().map(|t| t.3.hypot(t.4)).sum();
        Self {
            constant,
            terms,
            omega,
            c0,
        }
    }

    pub fn from_system(sys: &QpfSystem) -> Self {
        Self::new(&sys.field(), sys.omega)
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }
}

impl FiberField for CompiledField {
    fn eval(&self, theta: f64, phi: [f64; 2]) -> f64 {
        let mut acc = self.constant;
        for &(l, k1, k2, re, im) in &self.terms {
            let (s, c) = (TWO_PI * (l * theta + k1 * phi[0] + k2 * phi[1])).sin_cos();
            acc += re * c - im * s;
        }
        acc
    }

    fn omega(&self) -> [f64; 2] {
        self.omega
    }

    fn c0_size(&self) -> f64 {
        self.c0
    }
}

/// The field shifted by a constant δ.
pub struct Shifted<'a> {
    pub inner: &'a dyn FiberField,
    pub delta: f64,
}

impl FiberField for Shifted<'_> {
    fn eval(&self, theta: f64, phi: [f64; 2]) -> f64 {
        self.inner.eval(theta, phi) + self.delta
    }

    fn omega(&self) -> [f64; 2] {
        self.inner.omega()
    }

    fn c0_size(&self) -> f64 {
        self.inner.c0_size()
    }
}

fn phi_at(phi0: [f64; 2], omega: [f64; 2], t: f64) -> [f64; 2] {
    [phi0[0] + t * omega[0], phi0[1] + t * omega[1]]
}

fn rk4_step(
    field: &dyn FiberField,
    theta: f64,
    phi0: [f64; 2],
    omega: [f64; 2],
    t: f64,
    dt: f64,
) -> f64 {
    let k1 = field.eval(theta, phi_at(phi0, omega, t));
    let k2 = field.eval(theta + 0.5 * dt * k1, phi_at(phi0, omega, t + 0.5 * dt));
    let k3 = field.eval(theta + 0.5 * dt * k2, phi_at(phi0, omega, t + 0.5 * dt));
    let k4 = field.eval(theta + dt * k3, phi_at(phi0, omega, t + dt));
    theta + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

/// Lifted samples of one trajectory.
#[derive(Clone, Debug, Serialize)]
pub struct FlowTrajectory {
    pub times: Vec<f64>,
    pub theta: Vec<f64>,
    pub phi0: [f64; 2],
    pub omega: [f64; 2],
    pub dt: f64,
    pub order: u32,
    /// Largest step-halving local error per unit time.
    pub error_estimate: f64,
}

impl FlowTrajectory {
    pub fn phi(&self, i: usize) -> [f64; 2] {
        phi_at(self.phi0, self.omega, self.times[i])
    }

    pub fn last(&self) -> f64 {
        *self.theta.last().expect("non-empty")
    }
}

/// Circle distance on R/Z.
pub fn circle_dist(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    d.min(1.0 - d)
}

fn check_dt(dt: f64, t: f64) -> Result<usize, DynamicsError> {
    if !(dt > 0.0 && dt <= 1e-2 && t >= 0.0 && t.is_finite()) {
        return Err(DynamicsError::InvalidInput(format!(
            "need 0 < dt ≤ 1e-2 and finite T ≥ 0, got dt={dt}, T={t}"
        )));
    }
    Ok((t / dt).round() as usize)
}

/// Fixed-step RK4 with a step-halving check on every 100th step.
/// `stride` sets how many steps lie between stored samples.
pub fn integrate(
    field: &dyn FiberField,
    theta0: f64,
    phi0: [f64; 2],
    t_end: f64,
    dt: f64,
    stride: usize,
) -> Result<FlowTrajectory, DynamicsError> {
    let steps = check_dt(dt, t_end)?;
    let stride = stride.max(1);
    let omega = field.omega();
    let mut theta = theta0;
    let mut times = vec![0.0];
    let mut out = vec![theta0];
    let mut err: f64 = 0.0;
    for i in 0..steps {
        let t = i as f64 * dt;
        let next = rk4_step(field, theta, phi0, omega, t, dt);
        if i % 100 == 0 {
            let half = rk4_step(field, theta, phi0, omega, t, dt / 2.0);
            let two = rk4_step(field, half, phi0, omega, t + dt / 2.0, dt / 2.0);
            err = err.max((two - next).abs() * 16.0 / 15.0 / dt);
        }
        if (next - theta).abs() >= 0.5 {
            return Err(DynamicsError::StepControlFailure {
                estimate: (next - theta).abs() / dt,
            });
        }
        theta = next;
        if (i + 1) % stride == 0 || i + 1 == steps {
            times.push((i + 1) as f64 * dt);
            out.push(theta);
        }
    }
    if err > STEP_ERROR_LIMIT {
        return Err(DynamicsError::StepControlFailure { estimate: err });
    }
    Ok(FlowTrajectory {
        times,
        theta: out,
        phi0,
        omega,
        dt,
        order: 4,
        error_estimate: err,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    Plain,
    WeightedBirkhoff,
}

#[derive(Clone, Debug, Serialize)]
pub struct RotationOptions {
    pub horizon: f64,
    pub dt: f64,
    pub estimator: Estimator,
    pub starts: usize,
    pub seed: u64,
}

impl Default for RotationOptions {
    fn default() -> Self {
        Self {
            horizon: 1e3,
            dt: 1e-2,
            estimator: Estimator::WeightedBirkhoff,
            starts: 5,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RotationEstimate {
    pub rho: f64,
    pub error: f64,
    pub per_start: Vec<f64>,
}

/// The bump w(x) = exp(−1/(x(1−x))) on (0,1).
pub fn bump(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        0.0
    } else {
        (-1.0 / (x * (1.0 - x))).exp()
    }
}

/// (estimate over [0,T], estimate over [0,T/2]).
fn single_estimate(
    field: &dyn FiberField,
    theta0: f64,
    phi0: [f64; 2],
    horizon: f64,
    dt: f64,
    estimator: Estimator,
) -> Result<(f64, f64), DynamicsError> {
    let steps = check_dt(dt, horizon)?;
    let omega = field.omega();
    let half = steps / 2;
    let mut theta = theta0;
    let (mut num, mut den, mut num_h, mut den_h) = (0.0, 0.0, 0.0, 0.0);
    let mut theta_half = theta0;
    for i in 0..steps {
        let t = i as f64 * dt;
        if estimator == Estimator::WeightedBirkhoff {
            let v = field.eval(theta, phi_at(phi0, omega, t));
            let w = bump(t / horizon);
            num += w * v;
            den += w;
            if i < half {
                let wh = bump(t / (half as f64 * dt));
                num_h += wh * v;
                den_h += wh;
            }
        }
        theta = rk4_step(field, theta, phi0, omega, t, dt);
        if i + 1 == half {
            theta_half = theta;
        }
    }
    Ok(match estimator {
        Estimator::Plain => (
            (theta - theta0) / horizon,
            (theta_half - theta0) / (half as f64 * dt),
        ),
        Estimator::WeightedBirkhoff => (num / den, num_h / den_h),
    })
}

/// Fibered rotation number over `starts` random initial points.
pub fn rotation_number(
    field: &dyn FiberField,
    opts: &RotationOptions,
) -> Result<RotationEstimate, DynamicsError> {
    if opts.horizon < 100.0 {
        return Err(DynamicsError::InvalidInput(
            "horizon must be at least 100".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let starts: Vec<(f64, [f64; 2])> = (0..opts.starts.max(1))
        .map(|_| (rng.gen::<f64>(), [rng.gen::<f64>(), rng.gen::<f64>()]))
        .collect();
    let results: Result<Vec<(f64, f64)>, DynamicsError> = starts
        .par_iter()
        .map(|(t0, p0)| single_estimate(field, *t0, *p0, opts.horizon, opts.dt, opts.estimator))
        .collect();
    let results = results?;
    let per_start: Vec<f64> = results.iter().map(|r| r.0).collect();
    let rho = per_start.iter().sum::<f64>() / per_start.len() as f64;
    let error = match opts.estimator {
        Estimator::Plain => 2.0 * (1.0 + field.c0_size()) / opts.horizon,
        Estimator::WeightedBirkhoff => results
            .iter()
            .map(|r| (r.0 - r.1).abs())
            .fold(ERROR_FLOOR, f64::max),
    };
    let spread = per_start.iter().fold(f64::NEG_INFINITY, |a, b| a.max(*b))
        - per_start.iter().fold(f64::INFINITY, |a, b| a.min(*b));
    if spread > 3.0 * error {
        return Err(DynamicsError::InconsistentStarts {
            estimates: per_start,
            error,
        });
    }
    Ok(RotationEstimate {
        rho,
        error,
        per_start,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ConjugacyReport {
    pub samples: usize,
    pub max_defect: f64,
    pub mean_defect: f64,
    pub rho_a: Option<RotationEstimate>,
    pub rho_b: Option<RotationEstimate>,
    /// |ρ̂_A − ρ̂_B| and the sum of the error bars.
    pub rho_difference: Option<(f64, f64)>,
}

#[derive(Clone, Debug)]
pub struct ConjugacyOptions {
    pub samples: usize,
    pub horizon: f64,
    pub dt: f64,
    /// Steps between defect checks.
    pub check_stride: usize,
    pub seed: u64,
    /// Also compare rotation numbers with these options.
    pub rotation: Option<RotationOptions>,
}

impl Default for ConjugacyOptions {
    fn default() -> Self {
        Self {
            samples: 100,
            horizon: 50.0,
            dt: 1e-3,
            check_stride: 100,
            seed: 0,
            rotation: None,
        }
    }
}

/// Defect of `chain` as a conjugacy from B (final coordinates) to A:
/// dist(Π₁H(Φ_B^t(x)), Π₁Φ_A^t(H(x))).
pub fn verify_conjugacy(
    chain: &ConjugationChain,
    a: &dyn FiberField,
    b: &dyn FiberField,
    opts: &ConjugacyOptions,
) -> Result<ConjugacyReport, DynamicsError> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let starts: Vec<(f64, [f64; 2])> = (0..opts.samples)
        .map(|_| (rng.gen::<f64>(), [rng.gen::<f64>(), rng.gen::<f64>()]))
        .collect();
    let defects: Result<Vec<(f64, f64, usize)>, DynamicsError> = starts
        .par_iter()
        .map(|(t0, p0)| {
            let tb = integrate(b, *t0, *p0, opts.horizon, opts.dt, opts.check_stride)?;
            let ta = integrate(
                a,
                chain.eval(*t0, *p0),
                *p0,
                opts.horizon,
                opts.dt,
                opts.check_stride,
            )?;
            let mut max: f64 = 0.0;
            let mut sum = 0.0;
            for i in 0..tb.times.len() {
                let d = circle_dist(chain.eval(tb.theta[i], tb.phi(i)), ta.theta[i]);
                max = max.max(d);
                sum += d;
            }
            Ok((max, sum, tb.times.len()))
        })
        .collect();
    let defects = defects?;
    let max_defect = defects.iter().map(|d| d.0).fold(0.0, f64::max);
    let count: usize = defects.iter().map(|d| d.2).sum();
    let mean_defect = defects.iter().map(|d| d.1).sum::<f64>() / count.max(1) as f64;
    let (rho_a, rho_b, rho_difference) = match &opts.rotation {
        Some(ro) => {
            let ra = rotation_number(a, ro)?;
            let rb = rotation_number(b, ro)?;
            let diff = ((ra.rho - rb.rho).abs(), ra.error + rb.error);
            (Some(ra), Some(rb), Some(diff))
        }
        None => (None, None, None),
    };
    Ok(ConjugacyReport {
        samples: opts.samples,
        max_defect,
        mean_defect,
        rho_a,
        rho_b,
        rho_difference,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScanPoint {
    pub delta: f64,
    pub rho: f64,
    pub error: f64,
    /// Estimates from different starts agreed within 3 error bars.
    pub consistent: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ModeLockScan {
    pub points: Vec<ScanPoint>,
    pub tolerance: f64,
    /// Grid interval around δ = 0 where ρ̂ stays within tolerance of ρ̂(0).
    pub plateau: (f64, f64),
    pub half_width: f64,
}

/// ρ̂(F + δ) over an evenly spaced δ grid that must contain 0.
pub fn mode_lock_scan(
    field: &dyn FiberField,
    delta_range: (f64, f64),
    n_points: usize,
    tolerance: f64,
    opts: &RotationOptions,
) -> Result<ModeLockScan, DynamicsError> {
    if n_points < 11 || !(delta_range.0 < 0.0 && delta_range.1 > 0.0) {
        return Err(DynamicsError::InvalidInput(
            "need at least 11 points on a range around 0".into(),
        ));
    }
    let step = (delta_range.1 - delta_range.0) / (n_points - 1) as f64;
    let deltas: Vec<f64> = (0..n_points)
        .map(|i| delta_range.0 + i as f64 * step)
        .collect();
    let points: Result<Vec<ScanPoint>, DynamicsError> = deltas
        .par_iter()
        .map(|&delta| {
            let shifted = Shifted {
                inner: field,
                delta,
            };
            match rotation_number(&shifted, opts) {
                Ok(r) => Ok(ScanPoint {
                    delta,
                    rho: r.rho,
                    error: r.error,
                    consistent: true,
                }),
                Err(DynamicsError::InconsistentStarts { estimates, error }) => Ok(ScanPoint {
                    delta,
                    rho: estimates.iter().sum::<f64>() / estimates.len() as f64,
                    error,
                    consistent: false,
                }),
                Err(e) => Err(e),
            }
        })
        .collect();
    let points = points?;
    let zero = points
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.delta.abs().total_cmp(&b.1.delta.abs()))
        .map(|(i, _)| i)
        .expect("non-empty grid");
    let base = points[zero].rho;
    let within = |p: &ScanPoint| (p.rho - base).abs() <= tolerance;
    let mut lo = zero;
    while lo > 0 && within(&points[lo - 1]) {
        lo -= 1;
    }
    let mut hi = zero;
    while hi + 1 < points.len() && within(&points[hi + 1]) {
        hi += 1;
    }
    let plateau = (points[lo].delta, points[hi].delta);
    let half_width = plateau.0.abs().min(plateau.1.abs());
    Ok(ModeLockScan {
        points,
        tolerance,
        plateau,
        half_width,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::PhiFunction;

    fn golden() -> [f64; 2] {
        [1.0, (5f64.sqrt() - 1.0) / 2.0]
    }

    fn field(rho: f64, f: TorusFunction) -> CompiledField {
        CompiledField::new(&(&TorusFunction::constant(rho) + &f), golden())
    }

    #[test]
    fn compiled_matches_direct() {
        let f = &(&TorusFunction::cos_mode(1, [2, -1], 0.3)
            + &TorusFunction::sin_mode(0, [1, 1], 0.2))
            + &TorusFunction::constant(0.7);
        let c = CompiledField::new(&f, golden());
        for (t, p) in [(0.1, [0.2, 0.3]), (0.77, [0.5, 0.9])] {
            assert!((c.eval(t, p) - f.eval(t, p)).abs() < 1e-14);
        }
    }

    #[test]
    fn rigid_rotation_exact() {
        let c = field(0.3, TorusFunction::zero());
        let tr = integrate(&c, 0.2, [0.0, 0.0], 10.0, 1e-2, 100).unwrap();
        assert!((tr.last() - (0.2 + 3.0)).abs() < 1e-12);
    }

    #[test]
    fn equilibrium_stays() {
        let c = field(0.0, TorusFunction::sin_mode(1, [0, 0], 1.0));
        let tr = integrate(&c, 0.0, [0.0, 0.0], 10.0, 1e-2, 10).unwrap();
        assert!(tr.theta.iter().all(|t| t.abs() < 1e-15));
    }

    #[test]
    fn halved_step_agrees() {
        let f =
            &TorusFunction::cos_mode(1, [1, 0], 0.05) + &TorusFunction::sin_mode(1, [0, 1], 0.03);
        let c = field(0.4, f);
        let a = integrate(&c, 0.1, [0.3, 0.6], 20.0, 1e-2, 1000).unwrap();
        let b = integrate(&c, 0.1, [0.3, 0.6], 20.0, 5e-3, 2000).unwrap();
        assert!((a.last() - b.last()).abs() <= 1e-9 * 20.0);
    }

    #[test]
    fn rejects_large_dt() {
        let c = field(0.3, TorusFunction::zero());
        assert!(integrate(&c, 0.0, [0.0, 0.0], 1.0, 0.1, 1).is_err());
    }

    #[test]
    fn rigid_rotation_number() {
        let c = field(0.3, TorusFunction::zero());
        let r = rotation_number(&c, &RotationOptions::default()).unwrap();
        assert!((r.rho - 0.3).abs() < 1e-12);
    }

    #[test]
    fn fiber_translation_conjugacy() {
        // θ = θ̄ + h(φ) with ∂_ω h = g conjugates ρ + g to ρ.
        let g = PhiFunction::from_torus(
            &TorusFunction::cos_mode(0, [1, 0], 0.05) + &TorusFunction::sin_mode(0, [1, -2], 0.02),
        )
        .unwrap();
        let h = g.solve_constant_coefficient(golden(), 100).unwrap();
        let chain = ConjugationChain {
            elements: vec![crate::kamflow::ChainElement::FiberTranslation { h }],
        };
        let a = field(0.3, g.as_torus().clone());
        let b = field(0.3, TorusFunction::zero());
        let opts = ConjugacyOptions {
            samples: 10,
            horizon: 20.0,
            dt: 1e-2,
            ..ConjugacyOptions::default()
        };
        let rep = verify_conjugacy(&chain, &a, &b, &opts).unwrap();
        assert!(rep.max_defect <= 1e-8, "{}", rep.max_defect);
    }

    #[test]
    fn arnold_plateau() {
        let c = CompiledField::new(&TorusFunction::sin_mode(1, [0, 0], 0.2), golden());
        let opts = RotationOptions {
            horizon: 400.0,
            starts: 3,
            ..RotationOptions::default()
        };
        let scan = mode_lock_scan(&c, (-0.3, 0.3), 31, 1e-3, &opts).unwrap();
        // exact tongue |δ| ≤ 0.2, resolved to one grid step
        assert!(
            scan.half_width >= 0.18 - 1e-12 && scan.half_width <= 0.2 + 1e-12,
            "{:?}",
            scan.plateau
        );
    }

    #[test]
    fn rigid_has_no_plateau() {
        let c = field(0.3, TorusFunction::zero());
        let opts = RotationOptions {
            horizon: 200.0,
            starts: 2,
            ..RotationOptions::default()
        };
        let scan = mode_lock_scan(&c, (-0.05, 0.05), 11, 1e-3, &opts).unwrap();
        assert_eq!(scan.half_width, 0.0);
        for p in &scan.points {
            assert!((p.rho - 0.3 - p.delta).abs() < 1e-10);
        }
    }
}
