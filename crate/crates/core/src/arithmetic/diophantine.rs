//! Finite-range audit of |⟨k,ω⟩ + lρ| ≥ γ/(|k|+|l|)^τ.

use serde::Serialize;

use super::Frequency;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiophantineReport {
    pub gamma: f64,
    pub tau: f64,
    pub scan_bound: u32,
    /// min over 0 < |k|+|l| ≤ L, l ≠ 0 of |⟨k,ω⟩ + lρ|·(|k|+|l|)^τ.
    pub min_margin: f64,
    /// (k1, k2, l) attaining the minimum.
    pub witness: (i64, i64, i64),
    pub passes: bool,
}

/// Scans all (k, l) with l ≠ 0 and |k|₁ + |l| ≤ `l_max`. Only l > 0 is
/// visited since (k,l) and (−k,−l) give the same value.
pub fn audit_diophantine(
    rho: f64,
    freq: &Frequency,
    gamma: f64,
    tau: f64,
    l_max: u32,
) -> DiophantineReport {
    audit_with_alpha(rho, freq.alpha(), gamma, tau, l_max)
}

pub(crate) fn audit_with_alpha(
    rho: f64,
    alpha: f64,
    gamma: f64,
    tau: f64,
    l_max: u32,
) -> DiophantineReport {
    let big = l_max as i64;
    let mut best = f64::INFINITY;
    let mut witness = (0, 0, 1);
    for l in 1..=big {
        for k2 in -(big - l)..=(big - l) {
            let rem = big - l - k2.abs();
            let x = k2 as f64 * alpha + l as f64 * rho;
            for k1 in -rem..=rem {
                let d = (k1 as f64 + x).abs();
                let n = (k1.abs() + k2.abs() + l) as f64;
                let m = d * n.powf(tau);
                if m < best {
                    best = m;
                    witness = (k1, k2, l);
                }
            }
        }
    }
    DiophantineReport {
        gamma,
        tau,
        scan_bound: l_max,
        min_margin: best,
        witness,
        passes: best >= gamma,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arithmetic::{expand_continued_fraction, FrequencySpec};

    #[test]
    fn rational_rho_fails_at_origin() {
        let f = expand_continued_fraction(&FrequencySpec::golden(), 10).unwrap();
        let r = audit_diophantine(0.0, &f, 0.01, 3.0, 10);
        assert_eq!(r.min_margin, 0.0);
        assert_eq!(r.witness, (0, 0, 1));
        assert!(!r.passes);
    }

    #[test]
    fn resonant_rho_fails() {
        let f = expand_continued_fraction(&FrequencySpec::golden(), 10).unwrap();
        let rho = 2.0 + 3.0 * f.alpha();
        let r = audit_diophantine(rho, &f, 0.01, 3.0, 10);
        assert!(r.min_margin < 1e-12);
        assert_eq!(r.witness, (-2, -3, 1));
    }

    #[test]
    fn monotone_in_scan_bound() {
        let f = expand_continued_fraction(&FrequencySpec::golden(), 10).unwrap();
        let rho = 2f64.sqrt();
        let mut prev = f64::INFINITY;
        for l in [1, 2, 5, 10, 20, 50] {
            let m = audit_diophantine(rho, &f, 0.01, 3.0, l).min_margin;
            assert!(m <= prev);
            prev = m;
        }
    }
}
