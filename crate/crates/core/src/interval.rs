//! Outward-rounded f64 intervals.
//!
//! Every arithmetic result is widened by one ulp on each side, and
//! transcendental results by two, so the true value of an expression is
//! always enclosed. Used for logarithms of quantities far outside the f64
//! range (denominators millions of quotients deep, schedule values like
//! `exp(-1e9)`).

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

#[derive(Clone, Copy, PartialEq, Debug)]
pub struct Interval {
    lo: f64,
    hi: f64,
}

fn down(x: f64, n: u32) -> f64 {
    let mut y = x;
    for _ in 0..n {
        y = y.next_down();
    }
    y
}

fn up(x: f64, n: u32) -> f64 {
    let mut y = x;
    for _ in 0..n {
        y = y.next_up();
    }
    y
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        assert!(lo <= hi, "empty interval [{lo}, {hi}]");
        Self { lo, hi }
    }

    /// Exactly representable value.
    pub fn point(x: f64) -> Self {
        Self { lo: x, hi: x }
    }

    /// Value that is only known to within rounding of its decimal literal.
    pub fn approx(x: f64) -> Self {
        Self {
            lo: down(x, 1),
            hi: up(x, 1),
        }
    }

    pub fn from_u64(n: u64) -> Self {
        let x = n as f64;
        if x as u64 == n && n < (1u64 << 53) {
            Self::point(x)
        } else {
            Self::approx(x)
        }
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn hull(&self, other: &Self) -> Self {
        Self {
            lo: self.lo.min(other.lo),
            hi: self.hi.max(other.hi),
        }
    }

    /// `self < other` for every pair of enclosed values.
    pub fn certainly_lt(&self, other: &Self) -> bool {
        self.hi < other.lo
    }

    pub fn certainly_le(&self, other: &Self) -> bool {
        self.hi <= other.lo
    }

    pub fn certainly_gt(&self, other: &Self) -> bool {
        other.certainly_lt(self)
    }

    pub fn certainly_positive(&self) -> bool {
        self.lo > 0.0
    }

    pub fn ln(&self) -> Self {
        assert!(self.lo > 0.0, "ln of non-positive interval");
        Self {
            lo: down(self.lo.ln(), 2),
            hi: up(self.hi.ln(), 2),
        }
    }

    pub fn exp(&self) -> Self {
        Self {
            lo: down(self.lo.exp(), 2).max(0.0),
            hi: up(self.hi.exp(), 2),
        }
    }

    pub fn recip(&self) -> Self {
        assert!(
            self.lo > 0.0 || self.hi < 0.0,
            "reciprocal of interval containing 0"
        );
        Self {
            lo: down(1.0 / self.hi, 1),
            hi: up(1.0 / self.lo, 1),
        }
    }

    pub fn div(&self, other: &Self) -> Self {
        *self * other.recip()
    }

    pub fn sqrt(&self) -> Self {
        assert!(self.lo >= 0.0);
        Self {
            lo: down(self.lo.sqrt(), 1).max(0.0),
            hi: up(self.hi.sqrt(), 1),
        }
    }

    /// `self^p` for a non-negative base.
    pub fn powf(&self, p: &Self) -> Self {
        (self.ln() * *p).exp()
    }

    pub fn max(&self, other: &Self) -> Self {
        Self {
            lo: self.lo.max(other.lo),
            hi: self.hi.max(other.hi),
        }
    }

    pub fn min(&self, other: &Self) -> Self {
        Self {
            lo: self.lo.min(other.lo),
            hi: self.hi.min(other.hi),
        }
    }

    pub fn floor(&self) -> Self {
        Self {
            lo: self.lo.floor(),
            hi: self.hi.floor(),
        }
    }

    pub fn ln2() -> Self {
        Self::approx(std::f64::consts::LN_2)
    }

    pub fn ln10() -> Self {
        Self::approx(std::f64::consts::LN_10)
    }

    pub fn pi() -> Self {
        Self::approx(std::f64::consts::PI)
    }
}

impl Add for Interval {
    type Output = Interval;
    fn add(self, o: Interval) -> Interval {
        Interval {
            lo: down(self.lo + o.lo, 1),
            hi: up(self.hi + o.hi, 1),
        }
    }
}

impl Sub for Interval {
    type Output = Interval;
    fn sub(self, o: Interval) -> Interval {
        Interval {
            lo: down(self.lo - o.hi, 1),
            hi: up(self.hi - o.lo, 1),
        }
    }
}

impl Neg for Interval {
    type Output = Interval;
    fn neg(self) -> Interval {
        Interval {
            lo: -self.hi,
            hi: -self.lo,
        }
    }
}

impl Mul for Interval {
    type Output = Interval;
    fn mul(self, o: Interval) -> Interval {
        let c = [
            self.lo * o.lo,
            self.lo * o.hi,
            self.hi * o.lo,
            self.hi * o.hi,
        ];
        let lo = c.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Interval {
            lo: down(lo, 1),
            hi: up(hi, 1),
        }
    }
}

impl Mul<f64> for Interval {
    type Output = Interval;
    fn mul(self, o: f64) -> Interval {
        self * Interval::point(o)
    }
}

impl Add<f64> for Interval {
    type Output = Interval;
    fn add(self, o: f64) -> Interval {
        self + Interval::point(o)
    }
}

impl serde::Serialize for Interval {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        [self.lo, self.hi].serialize(s)
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:e}, {:e}]", self.lo, self.hi)
    }
}

/// Decimal rendering of `10^log10` as `"d.ddddde±N"`, rounded so the printed
/// number lies below every value enclosed by the interval when `lower` is set
/// (and above otherwise).
pub fn decimal_from_log10(log10: Interval, lower: bool, digits: usize) -> String {
    let x = if lower { log10.lo() } else { log10.hi() };
    let e = x.floor();
    let m = 10f64.powf(x - e);
    let scale = 10f64.powi(digits as i32 - 1);
    let mut mant = if lower {
        (m * scale).floor() / scale
    } else {
        (m * scale).ceil() / scale
    };
    let mut exp = e as i64;
    if mant >= 10.0 {
        mant /= 10.0;
        exp += 1;
    }
    if mant < 1.0 {
        mant *= 10.0;
        exp -= 1;
    }
    format!("{:.*}e{}", digits - 1, mant, exp)
}
