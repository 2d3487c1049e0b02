//! Ũ(α) = sup ln ln q_{n+1} / ln q_n and U(α) = Ũ(α) + 4 ln 𝒜 / ln 2.

use serde::Serialize;

use super::{ArithmeticError, CdSequence, Denominators};
use crate::interval::Interval;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LiouvilleExponents {
    /// Enclosure of the sup over the computed admissible range.
    pub u_tilde: Interval,
    pub u: Interval,
    /// n attaining the sup (by interval midpoint).
    pub attaining_index: usize,
    /// The sup is attained at the last admissible index, so deeper terms may
    /// raise it: the value is only a lower bound.
    pub lower_bound_only: bool,
    /// Corollary checks on the CD sequence: Q_k ≥ Q_{k−1}^𝒜 and
    /// ln ln Q_{k+1}/ln Q_k ≤ U. `None` without a sequence.
    pub cd_growth_ok: Option<bool>,
    pub cd_ratio_ok: Option<bool>,
}

/// ln ln q_{j} / ln q_{i}, or None when the term is not admissible
/// (q_i < 2 or q_j < 3).
pub fn ratio_term(den: &Denominators, i: usize, j: usize) -> Option<Interval> {
    let li = den.ln_q(i);
    let lj = den.ln_q(j);
    let ln2 = 2f64.ln();
    let ln3 = 3f64.ln();
    if li.hi() < ln2 * (1.0 - 1e-15) || lj.hi() < ln3 * (1.0 - 1e-15) {
        return None;
    }
    Some(lj.ln().div(&li))
}

pub fn compute_liouville_exponents(
    den: &Denominators,
    bridge_param: u32,
    cd: Option<&CdSequence>,
) -> Result<LiouvilleExponents, ArithmeticError> {
    if den.len() < 4 {
        return Err(ArithmeticError::DepthInsufficient {
            needed: 4,
            available: den.len(),
        });
    }
    let mut best: Option<(usize, Interval)> = None;
    let mut last_admissible = 0;
    for n in 1..den.len() - 1 {
        if let Some(t) = ratio_term(den, n, n + 1) {
            last_admissible = n;
            best = match best {
                Some((i, b)) if b.mid() >= t.mid() => Some((i, b.max(&t))),
                Some((_, b)) => Some((n, b.max(&t))),
                None => Some((n, t)),
            };
        }
    }
    let (attaining_index, u_tilde) = best.ok_or(ArithmeticError::DepthInsufficient {
        needed: den.len() + 1,
        available: den.len(),
    })?;
    let shift = Interval::point(4.0)
        * Interval::point(bridge_param as f64)
            .ln()
            .div(&Interval::ln2());
    let u = u_tilde + shift;

    let (cd_growth_ok, cd_ratio_ok) = match cd {
        None => (None, None),
        Some(seq) => {
            let idx = &seq.indices;
            let growth = idx
                .windows(2)
                .all(|w| den.ge_pow(w[1], w[0], bridge_param) == Some(true));
            let ratio = idx.windows(2).all(|w| match ratio_term(den, w[0], w[1]) {
                Some(t) => t.certainly_le(&u),
                None => true,
            });
            (Some(growth), Some(ratio))
        }
    };
    Ok(LiouvilleExponents {
        u_tilde,
        u,
        attaining_index,
        lower_bound_only: attaining_index == last_admissible,
        cd_growth_ok,
        cd_ratio_ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arithmetic::{expand_continued_fraction, FrequencySpec};

    #[test]
    fn golden_sup_by_enumeration() {
        let f = expand_continued_fraction(&FrequencySpec::golden(), 50).unwrap();
        let d = Denominators::from_frequency(&f, 51, 51).unwrap();
        let e = compute_liouville_exponents(&d, 8, None).unwrap();
        // Independent enumeration over Fibonacci numbers.
        let mut fib = vec![1f64, 1.0];
        for i in 2..51 {
            let x = fib[i - 1] + fib[i - 2];
            fib.push(x);
        }
        let (mut best, mut at) = (f64::MIN, 0);
        for n in 1..50 {
            if fib[n] >= 2.0 && fib[n + 1] >= 3.0 {
                let t = fib[n + 1].ln().ln() / fib[n].ln();
                if t > best {
                    best = t;
                    at = n;
                }
            }
        }
        assert_eq!(e.attaining_index, at);
        assert!(e.u_tilde.contains(best) || (e.u_tilde.mid() - best).abs() < 1e-14);
        assert!(!e.lower_bound_only);
        assert!((e.u.mid() - best - 12.0).abs() < 1e-12);
    }
}
