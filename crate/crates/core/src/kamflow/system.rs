use serde::{Deserialize, Serialize};

use crate::spectral::{PhiFunction, TorusFunction};

/// Declared membership data: ‖g‖_r ≤ η and N_{s,r}(f) ≤ η̃ at rotation
/// number ρ_f.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassData {
    #[serde(default)]
    pub rho_f: Option<f64>,
    #[serde(default)]
    pub rho_f_error: Option<f64>,
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default)]
    pub eta_tilde: Option<f64>,
    pub s: f64,
    pub r: f64,
    #[serde(default)]
    pub certified: bool,
}

/// `θ̇ = ρ̃ + g(φ) + f(θ,φ)`, `φ̇ = ω`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QpfSystem {
    pub rho_tilde: f64,
    pub g: PhiFunction,
    pub f: TorusFunction,
    pub omega: [f64; 2],
    pub class: ClassData,
}

impl QpfSystem {
    pub fn new(
        rho_tilde: f64,
        g: PhiFunction,
        f: TorusFunction,
        omega: [f64; 2],
        s: f64,
        r: f64,
    ) -> Self {
        Self {
            rho_tilde,
            g,
            f,
            omega,
            class: ClassData {
                s,
                r,
                ..ClassData::default()
            },
        }
    }

    /// Moves ĝ(0) into ρ̃; returns the system and the shift.
    pub fn normalized(&self) -> (Self, f64) {
        let shift = self.g.mean();
        let mut out = self.clone();
        out.rho_tilde += shift;
        out.g = self.g.without_mean();
        (out, shift)
    }

    /// The whole vector field ρ̃ + g + f as one torus function.
    pub fn field(&self) -> TorusFunction {
        let (s, r) = (self.class.s, self.class.r);
        (&(&TorusFunction::constant(self.rho_tilde) + self.g.as_torus()) + &self.f)
            .with_strips(s, r)
    }

    pub fn eval(&self, theta: f64, phi: [f64; 2]) -> f64 {
        self.rho_tilde + self.g.eval(phi) + self.f.eval(theta, phi)
    }

    pub fn g_norm(&self) -> f64 {
        self.g.without_mean().norm(self.class.r)
    }

    pub fn f_norm(&self) -> f64 {
        self.f.norm(self.class.s, self.class.r)
    }

    /// Checks the declared bounds against measured norms.
    pub fn class_holds(&self) -> bool {
        let g_ok = self.class.eta.into_iter().all(|e| self.g_norm() <= e);
        let f_ok = self.class.eta_tilde.into_iter().all(|e| self.f_norm() <= e);
        g_ok && f_ok
    }
}
