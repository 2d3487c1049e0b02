//! Continued fractions of the forcing frequency α, CD-bridge subsequences,
//! Liouville-type exponents and Diophantine audits.

mod cd;
pub mod decimal;
mod denominators;
mod diophantine;
mod liouville;
pub mod surd;

use std::fmt;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cd::{select_cd_sequence, validate_cd_sequence, CdSequence, CdValidation};
pub use denominators::Denominators;
pub use diophantine::{audit_diophantine, DiophantineReport};
pub use liouville::{compute_liouville_exponents, LiouvilleExponents};
pub use surd::PeriodicQuotients;

/// Bridge parameter 𝒜 used throughout unless overridden.
pub const DEFAULT_BRIDGE_PARAM: u32 = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ArithmeticError {
    #[error("invalid frequency spec: {0}")]
    InvalidSpec(String),
    #[error("precision exhausted: only {} partial quotients are certain", .certain.len())]
    PrecisionExhausted { certain: Vec<BigUint> },
    #[error("rational input: expansion terminates after {} quotients", .quotients.len())]
    RationalInput { quotients: Vec<BigUint> },
    #[error("depth insufficient: need {needed}, have {available}")]
    DepthInsufficient { needed: usize, available: usize },
    #[error("CD construction failed: {0}")]
    ConstructionFailed(String),
}

/// A partial quotient in JSON: a plain integer, or a decimal string for
/// values beyond u64.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum QuotientLiteral {
    Int(u64),
    Big(String),
}

impl QuotientLiteral {
    fn to_biguint(&self) -> Result<BigUint, ArithmeticError> {
        let v = match self {
            QuotientLiteral::Int(n) => BigUint::from(*n),
            QuotientLiteral::Big(s) => {
                if s.is_empty() || s.len() > 100_000 || !s.bytes().all(|b| b.is_ascii_digit()) {
                    return Err(ArithmeticError::InvalidSpec(format!(
                        "partial quotient {s:?} is not a decimal integer"
                    )));
                }
                BigUint::parse_bytes(s.as_bytes(), 10).unwrap_or_default()
            }
        };
        if v.is_zero() {
            return Err(ArithmeticError::InvalidSpec(
                "partial quotients must be positive".into(),
            ));
        }
        Ok(v)
    }
}

impl From<&BigUint> for QuotientLiteral {
    fn from(v: &BigUint) -> Self {
        match v.to_u64() {
            Some(n) => QuotientLiteral::Int(n),
            None => QuotientLiteral::Big(v.to_string()),
        }
    }
}

/// How α is specified in configuration files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FrequencySpec {
    /// `(a + b√d)/c`
    Quadratic { a: i64, b: i64, c: i64, d: u64 },
    /// Leading partial quotients a_1, a_2, ... of an irrational.
    Quotients { a: Vec<QuotientLiteral> },
    /// `value ± uncertainty`, both decimal literals.
    Decimal { value: String, uncertainty: String },
}

impl FrequencySpec {
    pub fn golden() -> Self {
        FrequencySpec::Quadratic {
            a: -1,
            b: 1,
            c: 2,
            d: 5,
        }
    }

    pub fn silver() -> Self {
        FrequencySpec::Quadratic {
            a: -1,
            b: 1,
            c: 1,
            d: 2,
        }
    }

    pub fn from_quotients(a: &[BigUint]) -> Self {
        FrequencySpec::Quotients {
            a: a.iter().map(QuotientLiteral::from).collect(),
        }
    }

    pub fn from_json(s: &str) -> Result<Self, ArithmeticError> {
        serde_json::from_str(s).map_err(|e| ArithmeticError::InvalidSpec(e.to_string()))
    }
}

#[derive(Clone, Debug)]
enum QuotientSource {
    Periodic(PeriodicQuotients),
    /// Certain prefix, together with a rational bracket containing α.
    Prefix {
        quotients: Vec<BigUint>,
        lo: BigRational,
        hi: BigRational,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Convergent {
    pub p: BigUint,
    pub q: BigUint,
}

/// α together with its continued-fraction data.
///
/// Indexing follows a_0 = 0, p_0 = 0, q_0 = 1, q_1 = a_1; partial quotients
/// are a_1..a_depth and convergents p_n/q_n for n = 0..=depth.
#[derive(Clone, Debug)]
pub struct Frequency {
    spec: FrequencySpec,
    source: QuotientSource,
    alpha: f64,
    quotients: Vec<BigUint>,
    convergents: Vec<Convergent>,
    bridge_param: u32,
    cd_sequence: Option<CdSequence>,
    exponents: Option<LiouvilleExponents>,
}

fn convergents_from(quotients: &[BigUint]) -> Vec<Convergent> {
    let mut out = Vec::with_capacity(quotients.len() + 1);
    out.push(Convergent {
        p: BigUint::zero(),
        q: BigUint::one(),
    });
    let (mut p_prev, mut q_prev) = (BigUint::one(), BigUint::zero());
    for a in quotients {
        let last = out.last().expect("non-empty");
        let p = a * &last.p + &p_prev;
        let q = a * &last.q + &q_prev;
        p_prev = last.p.clone();
        q_prev = last.q.clone();
        out.push(Convergent { p, q });
    }
    out
}

fn big_ratio(p: &BigUint, q: &BigUint) -> BigRational {
    BigRational::new(BigInt::from(p.clone()), BigInt::from(q.clone()))
}

/// Expands α to `depth` partial quotients with exact convergents.
pub fn expand_continued_fraction(
    spec: &FrequencySpec,
    depth: usize,
) -> Result<Frequency, ArithmeticError> {
    if depth == 0 {
        return Err(ArithmeticError::InvalidSpec(
            "depth must be positive".into(),
        ));
    }
    let source = match spec {
        FrequencySpec::Quadratic { a, b, c, d } => {
            QuotientSource::Periodic(surd::expand_surd(*a, *b, *c, *d)?)
        }
        FrequencySpec::Quotients { a } => {
            if a.is_empty() {
                return Err(ArithmeticError::InvalidSpec("empty quotient list".into()));
            }
            let q: Vec<BigUint> = a.iter().map(|x| x.to_biguint()).collect::<Result<_, _>>()?;
            let conv = convergents_from(&q);
            let n = q.len();
            let (c1, c0) = (&conv[n], &conv[n - 1]);
            // Every continuation lies between p_n/q_n and (p_n+p_{n-1})/(q_n+q_{n-1}).
            let x = big_ratio(&c1.p, &c1.q);
            let y = big_ratio(&(&c1.p + &c0.p), &(&c1.q + &c0.q));
            let (lo, hi) = if x < y { (x, y) } else { (y, x) };
            QuotientSource::Prefix {
                quotients: q,
                lo,
                hi,
            }
        }
        FrequencySpec::Decimal { value, uncertainty } => {
            let v = decimal::parse_decimal(value)?;
            let u = decimal::parse_decimal(uncertainty)?;
            if u < BigRational::zero() {
                return Err(ArithmeticError::InvalidSpec("negative uncertainty".into()));
            }
            let lo = &v - &u;
            let hi = &v + &u;
            if lo <= BigRational::zero() || hi >= BigRational::one() {
                return Err(ArithmeticError::InvalidSpec(
                    "value must lie in (0,1) including its uncertainty".into(),
                ));
            }
            let (q, terminated) = decimal::common_quotients(&lo, &hi, depth);
            if terminated {
                return Err(ArithmeticError::RationalInput { quotients: q });
            }
            QuotientSource::Prefix {
                quotients: q,
                lo,
                hi,
            }
        }
    };
    let quotients: Vec<BigUint> = match &source {
        QuotientSource::Periodic(pq) => (1..=depth).map(|k| pq.get(k).clone()).collect(),
        QuotientSource::Prefix { quotients, .. } => {
            if quotients.len() < depth {
                return Err(ArithmeticError::PrecisionExhausted {
                    certain: quotients.clone(),
                });
            }
            quotients[..depth].to_vec()
        }
    };
    let convergents = convergents_from(&quotients);
    let mut freq = Frequency {
        spec: spec.clone(),
        source,
        alpha: 0.0,
        quotients,
        convergents,
        bridge_param: DEFAULT_BRIDGE_PARAM,
        cd_sequence: None,
        exponents: None,
    };
    let (lo, hi) = freq.bracket(64);
    freq.alpha = ((lo + hi) / BigRational::from_integer(2.into()))
        .to_f64()
        .unwrap_or(f64::NAN);
    Ok(freq)
}

impl Frequency {
    pub fn spec(&self) -> &FrequencySpec {
        &self.spec
    }

    /// Nearest double to α.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// ω = (1, α).
    pub fn omega(&self) -> [f64; 2] {
        [1.0, self.alpha]
    }

    pub fn depth(&self) -> usize {
        self.quotients.len()
    }

    /// a_1..a_depth.
    pub fn partial_quotients(&self) -> &[BigUint] {
        &self.quotients
    }

    /// (p_n, q_n) for n = 0..=depth.
    pub fn convergents(&self) -> &[Convergent] {
        &self.convergents
    }

    pub fn q(&self, n: usize) -> &BigUint {
        &self.convergents[n].q
    }

    pub fn bridge_param(&self) -> u32 {
        self.bridge_param
    }

    pub fn cd_sequence(&self) -> Option<&CdSequence> {
        self.cd_sequence.as_ref()
    }

    pub fn exponents(&self) -> Option<&LiouvilleExponents> {
        self.exponents.as_ref()
    }

    /// Partial quotient a_k (k ≥ 1) beyond the expanded depth when the source
    /// determines it.
    pub fn quotient(&self, k: usize) -> Option<BigUint> {
        assert!(k >= 1);
        match &self.source {
            QuotientSource::Periodic(pq) => Some(pq.get(k).clone()),
            QuotientSource::Prefix { quotients, .. } => quotients.get(k - 1).cloned(),
        }
    }

    /// Number of quotients the source can certify (`None` = unbounded).
    pub fn available_quotients(&self) -> Option<usize> {
        match &self.source {
            QuotientSource::Periodic(_) => None,
            QuotientSource::Prefix { quotients, .. } => Some(quotients.len()),
        }
    }

    pub fn periodic(&self) -> Option<&PeriodicQuotients> {
        match &self.source {
            QuotientSource::Periodic(pq) => Some(pq),
            QuotientSource::Prefix { .. } => None,
        }
    }

    /// Rational interval containing α. For surds the bracket comes from
    /// consecutive convergents at `depth + extra`.
    pub fn bracket(&self, extra: usize) -> (BigRational, BigRational) {
        match &self.source {
            QuotientSource::Periodic(pq) => {
                let n = self.depth() + extra.max(2);
                let q: Vec<BigUint> = (1..=n).map(|k| pq.get(k).clone()).collect();
                let c = convergents_from(&q);
                let x = big_ratio(&c[n].p, &c[n].q);
                let y = big_ratio(&c[n - 1].p, &c[n - 1].q);
                if x < y {
                    (x, y)
                } else {
                    (y, x)
                }
            }
            QuotientSource::Prefix { lo, hi, .. } => (lo.clone(), hi.clone()),
        }
    }

    /// Selects and stores the CD subsequence and Liouville exponents.
    pub fn analyze(&mut self, bridge_param: u32) -> Result<(), ArithmeticError> {
        self.bridge_param = bridge_param;
        let den = Denominators::from_frequency(self, self.depth() + 1, self.depth() + 1)?;
        let cd = select_cd_sequence(&den, bridge_param, None)?;
        self.cd_sequence = Some(cd);
        let ex = compute_liouville_exponents(&den, bridge_param, self.cd_sequence.as_ref())?;
        self.exponents = Some(ex);
        Ok(())
    }

    /// Checks the best-approximation property (2.1) and the sandwich (2.2) at
    /// index n in exact rational arithmetic.
    pub fn verify_best_approx(&self, n: usize) -> Result<BestApproxReport, ArithmeticError> {
        if n + 1 > self.depth() {
            return Err(ArithmeticError::DepthInsufficient {
                needed: n + 1,
                available: self.depth(),
            });
        }
        let mut extra = 8;
        loop {
            let (lo, hi) = self.bracket(extra);
            match best_approx_with_bracket(&self.convergents, n, &lo, &hi) {
                Some(r) => return Ok(r),
                None => {
                    if self.periodic().is_none() || extra > 4096 {
                        return Ok(BestApproxReport {
                            n,
                            pass: false,
                            decided: false,
                            min_slack_21: f64::NAN,
                            slack_lower_22: f64::NAN,
                            slack_upper_22: f64::NAN,
                        });
                    }
                    extra *= 2;
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BestApproxReport {
    pub n: usize,
    pub pass: bool,
    /// False when the bracket for α was too wide to decide every comparison.
    pub decided: bool,
    /// min over 1 ≤ k < q_n, k ≠ q_{n-1} of ‖kα‖ − ‖q_{n−1}α‖ (NaN if the range is empty).
    pub min_slack_21: f64,
    /// ‖q_nα‖ − 1/(q_n + q_{n+1}).
    pub slack_lower_22: f64,
    /// 1/q_{n+1} − ‖q_nα‖.
    pub slack_upper_22: f64,
}

/// Interval [lo, hi] for ‖kα‖ given α ∈ [alo, ahi], or None if the map
/// x ↦ ‖x‖ is not monotone on [k·alo, k·ahi].
fn dist_interval(
    k: &BigInt,
    alo: &BigRational,
    ahi: &BigRational,
) -> Option<(BigRational, BigRational)> {
    let x = alo * k;
    let y = ahi * k;
    let half = BigRational::new(1.into(), 2.into());
    let fx = x.floor();
    if fx != y.floor() {
        return None;
    }
    let xf = &x - &fx;
    let yf = &y - &fx;
    let one = BigRational::one();
    if yf <= half {
        Some((xf, yf))
    } else if xf >= half {
        Some((&one - &yf, &one - &xf))
    } else {
        None
    }
}

fn best_approx_with_bracket(
    conv: &[Convergent],
    n: usize,
    alo: &BigRational,
    ahi: &BigRational,
) -> Option<BestApproxReport> {
    let to_f = |r: &BigRational| r.to_f64().unwrap_or(f64::NAN);
    let qn = BigInt::from(conv[n].q.clone());
    let qn1 = BigInt::from(conv[n + 1].q.clone());
    let mut pass = true;
    let mut min_slack = f64::INFINITY;
    if n >= 1 {
        let qprev = BigInt::from(conv[n - 1].q.clone());
        let (ref_lo, ref_hi) = dist_interval(&qprev, alo, ahi)?;
        let limit = conv[n].q.to_u64()?;
        for k in 1..limit {
            let kb = BigInt::from(k);
            if kb == qprev {
                continue;
            }
            let (lo, hi) = dist_interval(&kb, alo, ahi)?;
            if lo >= ref_hi {
                min_slack = min_slack.min(to_f(&(&lo - &ref_hi)));
            } else if hi < ref_lo {
                pass = false;
                min_slack = min_slack.min(to_f(&(&hi - &ref_lo)));
            } else {
                return None;
            }
        }
    }
    let (dlo, dhi) = dist_interval(&qn, alo, ahi)?;
    let lower = BigRational::new(1.into(), &qn + &qn1);
    let upper = BigRational::new(1.into(), qn1);
    let lower_ok = if dlo >= lower {
        true
    } else if dhi < lower {
        false
    } else {
        return None;
    };
    let upper_ok = if dhi <= upper {
        true
    } else if dlo > upper {
        false
    } else {
        return None;
    };
    Some(BestApproxReport {
        n,
        pass: pass && lower_ok && upper_ok,
        decided: true,
        min_slack_21: if min_slack.is_finite() {
            min_slack
        } else {
            f64::NAN
        },
        slack_lower_22: to_f(&(&dlo - &lower)),
        slack_upper_22: to_f(&(&upper - &dhi)),
    })
}

impl fmt::Display for Frequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "α ≈ {:.17} (depth {})", self.alpha, self.depth())
    }
}

/// JSON summary printed by the `cf` subcommand.
#[derive(Clone, Debug, Serialize)]
pub struct FrequencySummary {
    pub alpha: f64,
    pub depth: usize,
    pub partial_quotients: Vec<String>,
    pub convergents: Vec<(String, String)>,
    pub bridge_param: u32,
    pub cd_indices: Option<Vec<usize>>,
    pub cd_open_tail: Option<bool>,
    pub u_tilde: Option<[f64; 2]>,
    pub u: Option<[f64; 2]>,
    pub u_tilde_index: Option<usize>,
    pub u_tilde_lower_bound_only: Option<bool>,
}

impl Frequency {
    pub fn summary(&self) -> FrequencySummary {
        FrequencySummary {
            alpha: self.alpha,
            depth: self.depth(),
            partial_quotients: self.quotients.iter().map(|a| a.to_string()).collect(),
            convergents: self
                .convergents
                .iter()
                .map(|c| (c.p.to_string(), c.q.to_string()))
                .collect(),
            bridge_param: self.bridge_param,
            cd_indices: self.cd_sequence.as_ref().map(|c| c.indices.clone()),
            cd_open_tail: self.cd_sequence.as_ref().map(|c| c.open_tail),
            u_tilde: self
                .exponents
                .as_ref()
                .map(|e| [e.u_tilde.lo(), e.u_tilde.hi()]),
            u: self.exponents.as_ref().map(|e| [e.u.lo(), e.u.hi()]),
            u_tilde_index: self.exponents.as_ref().map(|e| e.attaining_index),
            u_tilde_lower_bound_only: self.exponents.as_ref().map(|e| e.lower_bound_only),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qs(f: &Frequency) -> Vec<u64> {
        f.convergents()
            .iter()
            .map(|c| c.q.to_u64().unwrap())
            .collect()
    }

    #[test]
    fn golden_depth_ten() {
        let f = expand_continued_fraction(&FrequencySpec::golden(), 10).unwrap();
        assert!(f.partial_quotients().iter().all(|a| a == &BigUint::one()));
        assert_eq!(&qs(&f)[..10], &[1, 1, 2, 3, 5, 8, 13, 21, 34, 55]);
        assert!((f.alpha() - (5f64.sqrt() - 1.0) / 2.0).abs() < 1e-16);
    }

    #[test]
    fn silver_depth_five() {
        let f = expand_continued_fraction(&FrequencySpec::silver(), 5).unwrap();
        assert_eq!(&qs(&f)[..5], &[1, 2, 5, 12, 29]);
    }

    #[test]
    fn three_tenths_is_rational() {
        let spec = FrequencySpec::Decimal {
            value: "0.3".into(),
            uncertainty: "0".into(),
        };
        match expand_continued_fraction(&spec, 10) {
            Err(ArithmeticError::RationalInput { quotients }) => {
                assert_eq!(quotients, vec![BigUint::from(3u32), BigUint::from(3u32)])
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn decimal_precision_runs_out() {
        let spec = FrequencySpec::Decimal {
            value: "0.6180339887".into(),
            uncertainty: "1e-10".into(),
        };
        assert!(expand_continued_fraction(&spec, 8).is_ok());
        assert!(matches!(
            expand_continued_fraction(&spec, 60),
            Err(ArithmeticError::PrecisionExhausted { .. })
        ));
    }

    #[test]
    fn quotient_list_bounds_depth() {
        let spec = FrequencySpec::Quotients {
            a: vec![
                QuotientLiteral::Int(2),
                QuotientLiteral::Big("1000000".into()),
            ],
        };
        let f = expand_continued_fraction(&spec, 2).unwrap();
        assert_eq!(f.q(2), &BigUint::from(2_000_001u64));
        assert!(expand_continued_fraction(&spec, 3).is_err());
    }

    #[test]
    fn spec_json_roundtrip() {
        let s = r#"{"kind":"quadratic","a":-1,"b":1,"c":2,"d":5}"#;
        let spec = FrequencySpec::from_json(s).unwrap();
        assert_eq!(spec, FrequencySpec::golden());
        let s = r#"{"kind":"quotients","a":[1,2,"3"]}"#;
        assert!(FrequencySpec::from_json(s).is_ok());
        assert!(FrequencySpec::from_json(r#"{"kind":"nope"}"#).is_err());
    }

    #[test]
    fn best_approx_small_cases() {
        let g = expand_continued_fraction(&FrequencySpec::golden(), 12).unwrap();
        let r = g.verify_best_approx(5).unwrap();
        assert!(r.pass && r.decided, "{r:?}");
        let r = g.verify_best_approx(1).unwrap();
        assert!(r.pass && r.min_slack_21.is_nan());
        let s = expand_continued_fraction(&FrequencySpec::silver(), 8).unwrap();
        assert!(s.verify_best_approx(3).unwrap().pass);
        assert!(g.verify_best_approx(12).is_err());
    }
}
