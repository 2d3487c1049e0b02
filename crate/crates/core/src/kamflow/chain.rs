use serde::{Deserialize, Serialize};

use super::KamError;
use crate::spectral::{
    compose_fiber_shift, pushforward_near_identity, CollocationOptions, PhiFunction, SpectralError,
    TorusFunction,
};

const INVERSION_TOL: f64 = 1e-15;
const INVERSION_MAX_ITERS: usize = 200;

/// One elementary change of fiber coordinate θ = θ̄ + h.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ChainElement {
    /// θ = θ̄ + h(φ)
    FiberTranslation { h: PhiFunction },
    /// θ = θ̄ + h(θ̄,φ)
    NearIdentity { h: TorusFunction },
}

impl ChainElement {
    pub fn displacement(&self) -> &TorusFunction {
        match self {
            ChainElement::FiberTranslation { h } => h.as_torus(),
            ChainElement::NearIdentity { h } => h,
        }
    }

    pub fn apply(&self, theta_bar: f64, phi: [f64; 2]) -> f64 {
        match self {
            ChainElement::FiberTranslation { h } => theta_bar + h.eval(phi),
            ChainElement::NearIdentity { h } => theta_bar + h.eval(theta_bar, phi),
        }
    }

    /// θ̄ with apply(θ̄) = θ; fixed-point iteration for near-identity maps.
    pub fn invert(&self, theta: f64, phi: [f64; 2]) -> f64 {
        match self {
            ChainElement::FiberTranslation { h } => theta - h.eval(phi),
            ChainElement::NearIdentity { h } => {
                let mut tb = theta - h.eval(theta, phi);
                for _ in 0..INVERSION_MAX_ITERS {
                    let next = theta - h.eval(tb, phi);
                    let done = (next - tb).abs() <= INVERSION_TOL * (1.0 + theta.abs());
                    tb = next;
                    if done {
                        break;
                    }
                }
                tb
            }
        }
    }

    /// N(h) and N(∂_θh) at the declared strips.
    pub fn norms(&self) -> (f64, f64) {
        let h = self.displacement();
        (h.declared_norm(), h.derive_theta().declared_norm())
    }

    /// Whether the near-identity invertibility conditions hold.
    pub fn invertible(&self) -> bool {
        match self {
            ChainElement::FiberTranslation { .. } => true,
            ChainElement::NearIdentity { h } => {
                h.declared_norm() < 0.25 && h.derive_theta().declared_norm() < 0.25
            }
        }
    }
}

/// H = e₁ ∘ e₂ ∘ … ∘ e_m, mapping final coordinates to original ones.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConjugationChain {
    pub elements: Vec<ChainElement>,
}

impl ConjugationChain {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn push(&mut self, e: ChainElement) {
        if !e.displacement().is_zero() {
            self.elements.push(e);
        }
    }

    pub fn extend(&mut self, other: ConjugationChain) {
        for e in other.elements {
            self.push(e);
        }
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// θ = Π₁H(θ̄, φ).
    pub fn eval(&self, theta_bar: f64, phi: [f64; 2]) -> f64 {
        self.elements
            .iter()
            .rev()
            .fold(theta_bar, |t, e| e.apply(t, phi))
    }

    pub fn inverse_eval(&self, theta: f64, phi: [f64; 2]) -> f64 {
        self.elements.iter().fold(theta, |t, e| e.invert(t, phi))
    }

    /// Σ N(h_j) over the elements.
    pub fn cumulative_norm(&self) -> f64 {
        self.elements
            .iter()
            .map(|e| e.displacement().declared_norm())
            .sum()
    }

    /// Π (1 + N(∂_θ h_j)).
    pub fn derivative_product(&self) -> f64 {
        self.elements.iter().map(|e| 1.0 + e.norms().1).product()
    }

    /// The displacement u of the composed map θ = θ̄ + u(θ̄,φ), by
    /// collocation. Strip checks are skipped: the result is meant for
    /// evaluation on the real torus.
    pub fn flatten(&self, opts: &CollocationOptions) -> Result<TorusFunction, KamError> {
        let opts = CollocationOptions {
            margin: Some(f64::INFINITY),
            ..opts.clone()
        };
        let mut total = TorusFunction::zero();
        for e in self.elements.iter().rev() {
            let u = e.displacement();
            let shifted = compose_fiber_shift(u, &total, &opts)?.value;
            total = &total + &shifted;
        }
        Ok(total)
    }

    /// Writes a vector field given in the final coordinates in the original
    /// ones.
    pub fn pushforward(
        &self,
        field: &TorusFunction,
        omega: [f64; 2],
        opts: &CollocationOptions,
    ) -> Result<TorusFunction, KamError> {
        let opts = CollocationOptions {
            margin: Some(f64::INFINITY),
            ..opts.clone()
        };
        let (s, r) = field.strips();
        let mut out = field.clone();
        for e in self.elements.iter().rev() {
            out = match e {
                ChainElement::FiberTranslation { h } => {
                    let shifted = compose_fiber_shift(&out, &(-h.as_torus()), &opts)?.value;
                    &shifted + &h.as_torus().derive_omega(omega)
                }
                ChainElement::NearIdentity { h } => {
                    pushforward_near_identity(&out, h, omega, &opts)?.function
                }
            };
        }
        Ok(out.with_strips(s, r))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, KamError> {
        let chain: ConjugationChain = serde_json::from_str(text)
            .map_err(|e| KamError::Spectral(SpectralError::InvalidFormat(e.to_string())))?;
        Ok(chain)
    }
}
