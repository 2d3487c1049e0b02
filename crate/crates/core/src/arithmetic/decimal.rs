//! Exact parsing of decimal literals such as `0.6180339887`, `-1.5e-3`, `7E+2`.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Zero};

use super::ArithmeticError;

const MAX_EXPONENT: i64 = 4096;
const MAX_DIGITS: usize = 4096;

/// Parses a decimal literal into an exact rational.
pub fn parse_decimal(s: &str) -> Result<BigRational, ArithmeticError> {
    let bad = |why: &str| ArithmeticError::InvalidSpec(format!("decimal literal {s:?}: {why}"));
    let t = s.trim();
    if t.is_empty() {
        return Err(bad("empty"));
    }
    let (neg, body) = match t.as_bytes()[0] {
        b'-' => (true, &t[1..]),
        b'+' => (false, &t[1..]),
        _ => (false, t),
    };
    let (mantissa, exp) = match body.find(['e', 'E']) {
        Some(i) => {
            let e: i64 = body[i + 1..]
                .parse()
                .map_err(|_| bad("malformed exponent"))?;
            (&body[..i], e)
        }
        None => (body, 0),
    };
    if exp.abs() > MAX_EXPONENT {
        return Err(bad("exponent out of range"));
    }
    let (int_part, frac_part) = match mantissa.find('.') {
        Some(i) => (&mantissa[..i], &mantissa[i + 1..]),
        None => (mantissa, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad("no digits"));
    }
    if !int_part
        .bytes()
        .chain(frac_part.bytes())
        .all(|b| b.is_ascii_digit())
    {
        return Err(bad("non-digit character"));
    }
    if int_part.len() + frac_part.len() > MAX_DIGITS {
        return Err(bad("too many digits"));
    }
    let digits = format!("{int_part}{frac_part}");
    let mut num = BigInt::from(BigUint::parse_bytes(digits.as_bytes(), 10).unwrap_or_default());
    if neg {
        num = -num;
    }
    let scale = exp - frac_part.len() as i64;
    let ten = BigInt::from(10u32);
    let r = if scale >= 0 {
        BigRational::from_integer(num * num_traits::pow(ten, scale as usize))
    } else {
        BigRational::new(num, num_traits::pow(ten, (-scale) as usize))
    };
    Ok(r)
}

/// Continued-fraction quotients shared by every number in `[lo, hi]`.
///
/// Returns the certain quotients a_1, a_2, ... and whether the interval is a
/// single rational whose expansion terminated.
pub fn common_quotients(lo: &BigRational, hi: &BigRational, max: usize) -> (Vec<BigUint>, bool) {
    let mut x = lo.clone();
    let mut y = hi.clone();
    let mut out = Vec::new();
    let exact = x == y;
    // Strip integer part (a_0).
    let fx = x.floor();
    if fx != y.floor() {
        return (out, false);
    }
    x -= fx.clone();
    y -= fx;
    while out.len() < max {
        if x.is_zero() || y.is_zero() {
            return (out, exact && x.is_zero());
        }
        let xi = x.recip();
        let yi = y.recip();
        let ax = xi.floor();
        let ay = yi.floor();
        if ax != ay {
            return (out, false);
        }
        let a = ax.to_integer();
        out.push(a.to_biguint().unwrap_or_else(BigUint::one));
        x = xi - ax.clone();
        y = yi - ay;
    }
    (out, false)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn parses_forms() {
        assert_eq!(parse_decimal("0.3").unwrap(), rat(3, 10));
        assert_eq!(parse_decimal("-1.5e-3").unwrap(), rat(-3, 2000));
        assert_eq!(parse_decimal("7E+2").unwrap(), rat(700, 1));
        assert_eq!(parse_decimal(".25").unwrap(), rat(1, 4));
        assert_eq!(parse_decimal("5.").unwrap(), rat(5, 1));
    }

    #[test]
    fn rejects_garbage() {
        for s in ["", ".", "e5", "1e", "0x10", "1.2.3", "--1", "1e99999"] {
            assert!(parse_decimal(s).is_err(), "{s}");
        }
    }

    #[test]
    fn euclid_on_three_tenths() {
        let r = rat(3, 10);
        let (q, terminated) = common_quotients(&r, &r, 100);
        assert!(terminated);
        assert_eq!(q, vec![BigUint::from(3u32), BigUint::from(3u32)]);
    }
}
