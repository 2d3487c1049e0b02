//! Denominators q_n tracked exactly up to a cutoff and as certified
//! logarithm intervals beyond it.

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};

use super::{ArithmeticError, Frequency};
use crate::interval::Interval;

/// Enclosure of ln x for x ≥ 1.
pub fn ln_biguint(x: &BigUint) -> Interval {
    assert!(!x.is_zero());
    if x.is_one() {
        return Interval::point(0.0);
    }
    let bits = x.bits();
    if bits <= 53 {
        return Interval::point(x.to_f64().expect("fits")).ln();
    }
    let shift = bits - 53;
    let top = (x >> shift).to_u64().expect("53 bits");
    let e = Interval::point(shift as f64) * Interval::ln2();
    let lo = Interval::point(top as f64).ln() + e;
    let hi = Interval::point((top + 1) as f64).ln() + e;
    Interval::new(lo.lo(), hi.hi())
}

/// Denominators q_0..q_{len-1} of a frequency.
#[derive(Clone, Debug)]
pub struct Denominators {
    exact: Vec<BigUint>,
    ln_q: Vec<Interval>,
    /// ln(a_{n} + 1) enclosures, index n ≥ 1 (slot 0 unused).
    ln_a1: Vec<Interval>,
}

impl Denominators {
    /// Builds `len` denominators, the first `exact_len` of them exactly.
    pub fn from_frequency(
        freq: &Frequency,
        len: usize,
        exact_len: usize,
    ) -> Result<Self, ArithmeticError> {
        if len < 2 {
            return Err(ArithmeticError::DepthInsufficient {
                needed: 2,
                available: len,
            });
        }
        if let Some(avail) = freq.available_quotients() {
            if len - 1 > avail {
                return Err(ArithmeticError::DepthInsufficient {
                    needed: len - 1,
                    available: avail,
                });
            }
        }
        let quotient = |k: usize| -> BigUint {
            if k <= freq.depth() {
                freq.partial_quotients()[k - 1].clone()
            } else {
                freq.quotient(k).expect("checked availability")
            }
        };
        Ok(Self::build(len, exact_len, quotient))
    }

    /// Builds from an arbitrary quotient function a_k, k ≥ 1.
    pub fn from_quotients(quotients: &[BigUint], exact_len: usize) -> Self {
        Self::build(quotients.len() + 1, exact_len, |k| quotients[k - 1].clone())
    }

    fn build(len: usize, exact_len: usize, quotient: impl Fn(usize) -> BigUint) -> Self {
        let exact_len = exact_len.min(len);
        let mut exact = Vec::with_capacity(exact_len);
        let mut ln_q = Vec::with_capacity(len);
        let mut ln_a1 = Vec::with_capacity(len);
        ln_a1.push(Interval::point(0.0));
        exact.push(BigUint::one());
        ln_q.push(Interval::point(0.0));
        let mut q_prev = BigUint::zero();
        // r_n = q_n / q_{n-1}
        let mut r = Interval::point(f64::INFINITY);
        let huge = 2f64.powi(1000);
        for n in 1..len {
            let a = quotient(n);
            let ln_a = ln_biguint(&a);
            let a_f = a.to_f64().unwrap_or(f64::INFINITY);
            let small = a.bits() <= 52;
            ln_a1.push(if small {
                Interval::point(a_f + 1.0).ln()
            } else {
                Interval::new(ln_a.lo(), (ln_a.hi() + 1.0 / a_f.max(1.0)).next_up())
            });
            let inv_r = if r.lo().is_infinite() {
                Interval::point(0.0)
            } else {
                r.recip()
            };
            let (ln_r, new_r) = if small {
                let rr = Interval::point(a_f) + inv_r;
                (rr.ln(), rr)
            } else {
                // a ≤ r ≤ a + 1
                let ln_r = Interval::new(ln_a.lo(), (ln_a.hi() + 1.0 / a_f.min(huge)).next_up());
                let rr = if a_f.is_finite() && a_f < huge {
                    Interval::new(a_f.next_down(), (a_f + 1.0).next_up())
                } else {
                    Interval::new(huge, f64::INFINITY)
                };
                (ln_r, rr)
            };
            if n < exact_len {
                let last = exact.last().expect("non-empty");
                let q = &a * last + &q_prev;
                q_prev = last.clone();
                ln_q.push(ln_biguint(&q));
                if n + 1 == exact_len {
                    // Hand over to the ratio recurrence with a tight ratio.
                    r = (ln_biguint(&q) - ln_biguint(&q_prev)).exp();
                    if q_prev.is_one() {
                        r = Interval::point(q.to_f64().unwrap_or(f64::INFINITY));
                    }
                } else {
                    r = new_r;
                }
                exact.push(q);
            } else {
                let prev = *ln_q.last().expect("non-empty");
                ln_q.push(prev + ln_r);
                r = new_r;
            }
        }
        Self { exact, ln_q, ln_a1 }
    }

    pub fn len(&self) -> usize {
        self.ln_q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ln_q.is_empty()
    }

    pub fn exact_len(&self) -> usize {
        self.exact.len()
    }

    pub fn exact(&self, n: usize) -> Option<&BigUint> {
        self.exact.get(n)
    }

    pub fn ln_q(&self, n: usize) -> Interval {
        self.ln_q[n]
    }

    /// Enclosure of ln(a_n + 1), n ≥ 1.
    pub fn ln_a_plus_one(&self, n: usize) -> Interval {
        self.ln_a1[n]
    }

    /// Decides q_j ≥ q_i^e. `None` when the enclosures overlap and exact
    /// values are unavailable.
    pub fn ge_pow(&self, j: usize, i: usize, e: u32) -> Option<bool> {
        let lhs = self.ln_q[j];
        let rhs = self.ln_q[i] * e as f64;
        if lhs.lo() >= rhs.hi() {
            return Some(true);
        }
        if lhs.hi() < rhs.lo() {
            return Some(false);
        }
        match (self.exact.get(j), self.exact.get(i)) {
            (Some(qj), Some(qi)) => Some(*qj >= num_traits::pow(qi.clone(), e as usize)),
            _ => None,
        }
    }

    /// Decides q_j ≤ q_i^e.
    pub fn le_pow(&self, j: usize, i: usize, e: u32) -> Option<bool> {
        let lhs = self.ln_q[j];
        let rhs = self.ln_q[i] * e as f64;
        if lhs.hi() <= rhs.lo() {
            return Some(true);
        }
        if lhs.lo() > rhs.hi() {
            return Some(false);
        }
        match (self.exact.get(j), self.exact.get(i)) {
            (Some(qj), Some(qi)) => Some(*qj <= num_traits::pow(qi.clone(), e as usize)),
            _ => None,
        }
    }

    /// Decides q_{i+1} ≤ q_i^e, using the sufficient test a_{i+1} + 1 ≤ q_i^{e−1}
    /// when the direct comparison is undecided.
    pub fn step_le_pow(&self, i: usize, e: u32) -> Option<bool> {
        if let Some(b) = self.le_pow(i + 1, i, e) {
            return Some(b);
        }
        let lhs = self.ln_a1[i + 1];
        let rhs = self.ln_q[i] * (e - 1) as f64;
        if lhs.hi() <= rhs.lo() {
            return Some(true);
        }
        None
    }
}
