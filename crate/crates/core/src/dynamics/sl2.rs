use serde::Serialize;

use super::{check_dt, CompiledField, DynamicsError, FiberField};
use crate::spectral::TorusFunction;

use std::f64::consts::PI;

/// Linear cocycle v̇ = M(φ)v with φ̇ = ω and trace M = 0.
#[derive(Clone, Debug)]
pub struct Sl2Flow {
    entries: [[CompiledField; 2]; 2],
    omega: [f64; 2],
}

impl Sl2Flow {
    /// Entries are functions of φ only; the trace is checked on a 16×16 grid.
    pub fn new(m: [[TorusFunction; 2]; 2], omega: [f64; 2]) -> Result<Self, DynamicsError> {
        if m.iter().flatten().any(|f| !f.is_phi_only()) {
            return Err(DynamicsError::InvalidInput(
                "matrix entries must not depend on θ".into(),
            ));
        }
        let entries = [
            [
                CompiledField::new(&m[0][0], omega),
                CompiledField::new(&m[0][1], omega),
            ],
            [
                CompiledField::new(&m[1][0], omega),
                CompiledField::new(&m[1][1], omega),
            ],
        ];
        let flow = Self { entries, omega };
        let mut max: f64 = 0.0;
        for i in 0..16 {
            for j in 0..16 {
                let a = flow.matrix([i as f64 / 16.0, j as f64 / 16.0]);
                max = max.max((a[0][0] + a[1][1]).abs());
            }
        }
        if max > 1e-12 {
            return Err(DynamicsError::TraceNonzero { max });
        }
        Ok(flow)
    }

    pub fn constant(m: [[f64; 2]; 2], omega: [f64; 2]) -> Result<Self, DynamicsError> {
        let c = |x: f64| TorusFunction::constant(x);
        Self::new([[c(m[0][0]), c(m[0][1])], [c(m[1][0]), c(m[1][1])]], omega)
    }

    pub fn matrix(&self, phi: [f64; 2]) -> [[f64; 2]; 2] {
        let e = |i: usize, j: usize| self.entries[i][j].eval(0.0, phi);
        [[e(0, 0), e(0, 1)], [e(1, 0), e(1, 1)]]
    }

    pub fn omega(&self) -> [f64; 2] {
        self.omega
    }

    fn apply(&self, phi: [f64; 2], v: [f64; 2]) -> [f64; 2] {
        let m = self.matrix(phi);
        [
            m[0][0] * v[0] + m[0][1] * v[1],
            m[1][0] * v[0] + m[1][1] * v[1],
        ]
    }

    fn rk4(&self, v: [f64; 2], phi0: [f64; 2], t: f64, dt: f64) -> [f64; 2] {
        let at = |s: f64| [phi0[0] + s * self.omega[0], phi0[1] + s * self.omega[1]];
        let ax = |a: [f64; 2], b: [f64; 2], h: f64| [a[0] + h * b[0], a[1] + h * b[1]];
        let k1 = self.apply(at(t), v);
        let k2 = self.apply(at(t + 0.5 * dt), ax(v, k1, 0.5 * dt));
        let k3 = self.apply(at(t + 0.5 * dt), ax(v, k2, 0.5 * dt));
        let k4 = self.apply(at(t + dt), ax(v, k3, dt));
        [
            v[0] + dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            v[1] + dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        ]
    }
}

/// Induced flow on RP¹ in the doubled-angle coordinate θ ∈ R/Z, where the
/// line through (cos πθ, sin πθ) has coordinate θ.
#[derive(Clone, Debug)]
pub struct ProjectiveField {
    flow: Sl2Flow,
    c0: f64,
}

impl ProjectiveField {
    pub fn flow(&self) -> &Sl2Flow {
        &self.flow
    }
}

impl FiberField for ProjectiveField {
    fn eval(&self, theta: f64, phi: [f64; 2]) -> f64 {
        let m = self.flow.matrix(phi);
        let (s, c) = (2.0 * PI * theta).sin_cos();
        ((m[1][0] - m[0][1]) / 2.0 + (m[1][0] + m[0][1]) / 2.0 * c - m[0][0] * s) / PI
    }

    fn omega(&self) -> [f64; 2] {
        self.flow.omega
    }

    fn c0_size(&self) -> f64 {
        self.c0
    }
}

/// Builds the projective field and checks it against direct integration of
/// the linear system over T = 100 from three initial lines.
pub fn projective_flow(flow: &Sl2Flow) -> Result<ProjectiveField, DynamicsError> {
    let c0 = flow
        .entries
        .iter()
        .flatten()
        .map(|e| e.c0_size() + e.constant().abs())
        .sum::<f64>()
        * 2.0
        / PI;
    let field = ProjectiveField {
        flow: flow.clone(),
        c0,
    };
    let dt = 1e-3;
    let steps = check_dt(dt, 100.0)?;
    let mut worst: f64 = 0.0;
    for (j, theta0) in [0.1, 0.45, 0.8].into_iter().enumerate() {
        let phi0 = [0.17 * j as f64, 0.31 * j as f64];
        let mut theta = theta0;
        let mut v = [(PI * theta0).cos(), (PI * theta0).sin()];
        let mut lift = theta0;
        for i in 0..steps {
            let t = i as f64 * dt;
            theta = super::rk4_step(&field, theta, phi0, flow.omega, t, dt);
            v = flow.rk4(v, phi0, t, dt);
            let n = v[0].hypot(v[1]);
            v = [v[0] / n, v[1] / n];
            let raw = v[1].atan2(v[0]) / PI;
            let d = (raw - lift).rem_euclid(1.0);
            lift += if d > 0.5 { d - 1.0 } else { d };
            worst = worst.max((lift - theta).abs());
        }
    }
    if worst > 1e-8 {
        return Err(DynamicsError::ValidationFailed { discrepancy: worst });
    }
    Ok(field)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LyapunovEstimate {
    pub exponent: f64,
    /// |λ_T − λ_{T/2}|.
    pub error: f64,
}

/// Top Lyapunov exponent by renormalized integration from v = (1, 1)/√2.
pub fn lyapunov_exponent(
    flow: &Sl2Flow,
    phi0: [f64; 2],
    horizon: f64,
    dt: f64,
) -> Result<LyapunovEstimate, DynamicsError> {
    let steps = check_dt(dt, horizon)?;
    if steps < 2 {
        return Err(DynamicsError::InvalidInput("horizon too short".into()));
    }
    let half = steps / 2;
    let mut v = [std::f64::consts::FRAC_1_SQRT_2; 2];
    let mut log_growth = 0.0;
    let mut at_half = 0.0;
    for i in 0..steps {
        v = flow.rk4(v, phi0, i as f64 * dt, dt);
        let n = v[0].hypot(v[1]);
        log_growth += n.ln();
        v = [v[0] / n, v[1] / n];
        if i + 1 == half {
            at_half = log_growth / (half as f64 * dt);
        }
    }
    let exponent = log_growth / (steps as f64 * dt);
    Ok(LyapunovEstimate {
        exponent,
        error: (exponent - at_half).abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{integrate, rotation_number, RotationOptions};

    const OMEGA: [f64; 2] = [1.0, 0.618_033_988_749_895];

    #[test]
    fn rotation_generator_is_rigid() {
        let beta = 0.7;
        let f = Sl2Flow::constant([[0.0, -beta], [beta, 0.0]], OMEGA).unwrap();
        let p = projective_flow(&f).unwrap();
        for th in [0.0, 0.3, 0.9] {
            assert!((p.eval(th, [0.2, 0.4]) - beta / PI).abs() < 1e-14);
        }
        let tr = integrate(&p, 0.0, [0.0, 0.0], 10.0, 1e-2, 100).unwrap();
        assert!((tr.last() - 10.0 * beta / PI).abs() < 1e-12);
    }

    #[test]
    fn trace_checked() {
        assert!(matches!(
            Sl2Flow::constant([[0.1, 0.0], [0.0, 0.1]], OMEGA),
            Err(DynamicsError::TraceNonzero { .. })
        ));
    }

    #[test]
    fn forced_cocycle_validates() {
        let m = [
            [
                TorusFunction::cos_mode(0, [1, 0], 0.2),
                &TorusFunction::constant(-0.5) + &TorusFunction::sin_mode(0, [0, 1], 0.1),
            ],
            [
                TorusFunction::constant(0.6),
                TorusFunction::cos_mode(0, [1, 0], -0.2),
            ],
        ];
        let f = Sl2Flow::new(m, OMEGA).unwrap();
        assert!(projective_flow(&f).is_ok());
    }

    #[test]
    fn hyperbolic_exponent() {
        let f = Sl2Flow::constant([[0.1, 0.0], [0.0, -0.1]], OMEGA).unwrap();
        let l = lyapunov_exponent(&f, [0.0, 0.0], 1e3, 1e-2).unwrap();
        assert!((l.exponent - 0.1).abs() <= 1e-3, "{l:?}");
        assert!(l.error <= 1e-3);
    }

    #[test]
    fn elliptic_zero_exponent_and_rotation() {
        let f = Sl2Flow::constant([[0.0, -0.5], [0.5, 0.0]], OMEGA).unwrap();
        let l = lyapunov_exponent(&f, [0.0, 0.0], 1e3, 1e-2).unwrap();
        assert!(l.exponent.abs() < 1e-10);
        let p = projective_flow(&f).unwrap();
        let r = rotation_number(&p, &RotationOptions::default()).unwrap();
        assert!((r.rho - 0.5 / PI).abs() < 1e-10);
    }
}
