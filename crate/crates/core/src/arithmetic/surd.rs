//! Periodic continued-fraction expansion of quadratic surds `(a + b√d)/c`.

use std::collections::HashMap;

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_traits::{Signed, Zero};

use super::ArithmeticError;

/// Quotients a_1, a_2, ... of a quadratic irrational in (0,1): a finite
/// preperiod followed by a repeating block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PeriodicQuotients {
    pub preperiod: Vec<BigUint>,
    pub period: Vec<BigUint>,
}

impl PeriodicQuotients {
    /// a_k for k ≥ 1.
    pub fn get(&self, k: usize) -> &BigUint {
        assert!(k >= 1);
        let i = k - 1;
        if i < self.preperiod.len() {
            &self.preperiod[i]
        } else {
            &self.period[(i - self.preperiod.len()) % self.period.len()]
        }
    }
}

/// Expands `(a + b√d)/c`. Requires d > 0 not a perfect square, b ≠ 0, c ≠ 0,
/// and the value in (0,1).
pub fn expand_surd(a: i64, b: i64, c: i64, d: u64) -> Result<PeriodicQuotients, ArithmeticError> {
    let bad = |why: &str| ArithmeticError::InvalidSpec(format!("quadratic surd: {why}"));
    if c == 0 {
        return Err(bad("c = 0"));
    }
    if b == 0 || d == 0 {
        return Err(bad("value is rational (b = 0 or d = 0)"));
    }
    let dd = BigInt::from(d);
    let s = dd.sqrt();
    if &s * &s == dd {
        return Err(bad("d is a perfect square, value is rational"));
    }
    let (mut a, mut b, mut c) = (BigInt::from(a), BigInt::from(b), BigInt::from(c));
    if b.is_negative() {
        a = -a;
        b = -b;
        c = -c;
    }
    // (a + b√d)/c = (a|c| + √(b²dc²)) / (c|c|)
    let cabs = c.abs();
    let mut p = &a * &cabs;
    let big_d = &b * &b * &dd * &c * &c;
    let mut q = &c * &cabs;
    let root = big_d.sqrt();

    let floor_of = |p: &BigInt, q: &BigInt| -> BigInt {
        if q.sign() == Sign::Plus {
            (p + &root).div_floor(q)
        } else {
            (p + &root + BigInt::from(1)).div_floor(q)
        }
    };

    let a0 = floor_of(&p, &q);
    if !a0.is_zero() {
        return Err(bad("value must lie in (0,1)"));
    }
    // Advance past a_0 = 0.
    let step = |p: &BigInt, q: &BigInt, ak: &BigInt| -> (BigInt, BigInt) {
        let p2 = ak * q - p;
        let q2 = (&big_d - &p2 * &p2) / q;
        (p2, q2)
    };
    let (np, nq) = step(&p, &q, &a0);
    p = np;
    q = nq;

    let mut seen: HashMap<(BigInt, BigInt), usize> = HashMap::new();
    let mut quotients: Vec<BigUint> = Vec::new();
    const CAP: usize = 1 << 20;
    loop {
        if let Some(&start) = seen.get(&(p.clone(), q.clone())) {
            let period = quotients.split_off(start);
            return Ok(PeriodicQuotients {
                preperiod: quotients,
                period,
            });
        }
        if quotients.len() >= CAP {
            return Err(bad("period detection exceeded the iteration cap"));
        }
        seen.insert((p.clone(), q.clone()), quotients.len());
        let ak = floor_of(&p, &q);
        if ak.sign() != Sign::Plus {
            return Err(bad("non-positive partial quotient, internal inconsistency"));
        }
        let (np, nq) = step(&p, &q, &ak);
        quotients.push(ak.to_biguint().expect("positive"));
        p = np;
        q = nq;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn u(v: &[u64]) -> Vec<BigUint> {
        v.iter().map(|&x| BigUint::from(x)).collect()
    }

    #[test]
    fn golden_and_silver() {
        let g = expand_surd(-1, 1, 2, 5).unwrap();
        assert!(g.preperiod.is_empty());
        assert_eq!(g.period, u(&[1]));
        let s = expand_surd(-1, 1, 1, 2).unwrap();
        assert_eq!(s.period, u(&[2]));
    }

    #[test]
    fn sqrt7_fractional_part() {
        // √7 = [2; 1,1,1,4], so √7 − 2 = [0; 1,1,1,4, ...]
        let q = expand_surd(-2, 1, 1, 7).unwrap();
        let first: Vec<_> = (1..=9).map(|k| q.get(k).clone()).collect();
        assert_eq!(first, u(&[1, 1, 1, 4, 1, 1, 1, 4, 1]));
    }

    #[test]
    fn negative_coefficients() {
        // (1 − √2)/(−1) = √2 − 1
        let q = expand_surd(1, -1, -1, 2).unwrap();
        assert_eq!(q.get(1), &BigUint::from(2u32));
        assert_eq!(q.get(7), &BigUint::from(2u32));
        // (3 − √5)/2 = 0.3819..., quotients 2,1,1,1,...
        let q = expand_surd(3, -1, 2, 5).unwrap();
        let first: Vec<_> = (1..=5).map(|k| q.get(k).clone()).collect();
        assert_eq!(first, u(&[2, 1, 1, 1, 1]));
    }

    #[test]
    fn rejects() {
        assert!(expand_surd(0, 1, 1, 4).is_err());
        assert!(expand_surd(1, 1, 1, 2).is_err());
        assert!(expand_surd(0, 1, 0, 2).is_err());
    }
}
