//! Selection of the CD-bridge subsequence (Q_k) of the denominators.
//!
//! The selection is a depth-first scan: each new index is the smallest one
//! satisfying the local clauses, with backtracking when a choice leaves no
//! continuation. Whatever comes out is re-checked by [`validate_cd_sequence`].

use serde::Serialize;

use super::{ArithmeticError, Denominators};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CdSequence {
    /// n_k with Q_k = q_{n_k}, Q̄_k = q_{n_k + 1}.
    pub indices: Vec<usize>,
    pub bridge_param: u32,
    /// Whether Q̄_k ≥ Q_k^𝒜 ("jump") at each term.
    pub jumps: Vec<bool>,
    /// The last term is not a jump, so its clause needs a term beyond the
    /// computed range.
    pub open_tail: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CdValidation {
    pub ok: bool,
    pub clauses_checked: usize,
    pub failures: Vec<String>,
}

const MAX_CANDIDATES: usize = 32;

struct Tables {
    jump: Vec<bool>,
    bad_prefix: Vec<usize>,
}

fn tables(den: &Denominators, a: u32) -> Tables {
    let n = den.len();
    let mut jump = vec![false; n];
    let mut bad_prefix = vec![0usize; n];
    for i in 0..n.saturating_sub(1) {
        jump[i] = den.ge_pow(i + 1, i, a) == Some(true);
        let ok = den.step_le_pow(i, a) == Some(true);
        bad_prefix[i + 1] = bad_prefix[i] + usize::from(!ok);
    }
    Tables { jump, bad_prefix }
}

fn bridge(den: &Denominators, t: &Tables, l: usize, n: usize, a: u32) -> bool {
    l < n
        && t.bad_prefix[n] == t.bad_prefix[l]
        && den.ge_pow(n, l, a) == Some(true)
        && den.le_pow(n, l, a * a * a) == Some(true)
}

/// Index n_0: the last n with q_n = 1.
fn first_index(den: &Denominators) -> usize {
    if den.len() > 1 && den.ln_q(1).hi() == 0.0 {
        1
    } else {
        0
    }
}

/// Selects the CD subsequence for bridge parameter `a` (𝒜 ≥ 2), stopping
/// after `max_terms` terms or when the computed range is exhausted.
pub fn select_cd_sequence(
    den: &Denominators,
    a: u32,
    max_terms: Option<usize>,
) -> Result<CdSequence, ArithmeticError> {
    if a < 2 {
        return Err(ArithmeticError::InvalidSpec(
            "bridge parameter must be ≥ 2".into(),
        ));
    }
    let len = den.len();
    let n0 = first_index(den);
    if n0 + 1 >= len {
        return Err(ArithmeticError::DepthInsufficient {
            needed: n0 + 2,
            available: len,
        });
    }
    let t = tables(den, a);
    let a4 = a.pow(4);
    let max_terms = max_terms.unwrap_or(usize::MAX);

    // Candidates for the term after index m, in preference order, and whether
    // the scan ran off the computed range before the Q̄^{𝒜⁴} bound.
    let candidates = |m: usize| -> (Vec<usize>, bool) {
        let mut jumps = Vec::new();
        let mut bridges = Vec::new();
        let mut exhausted = true;
        for c in m + 1..len {
            match den.le_pow(c, m + 1, a4) {
                Some(true) => {}
                Some(false) => {
                    exhausted = false;
                    break;
                }
                None => continue,
            }
            if c + 1 >= len {
                break;
            }
            if !t.jump[m] && !bridge(den, &t, m, c, a) {
                continue;
            }
            if t.jump[c] {
                if jumps.len() < MAX_CANDIDATES {
                    jumps.push(c);
                }
            } else if bridges.len() < MAX_CANDIDATES && bridge(den, &t, m + 1, c, a) {
                bridges.push(c);
            }
        }
        jumps.extend(bridges);
        (jumps, exhausted)
    };

    let mut indices = vec![n0];
    let mut stack: Vec<(Vec<usize>, usize)> = Vec::new();
    let mut budget = 10_000usize;
    loop {
        if indices.len() >= max_terms {
            break;
        }
        let last = *indices.last().expect("non-empty");
        let (cands, exhausted) = candidates(last);
        if cands.is_empty() {
            if exhausted {
                break;
            }
            // Dead end: backtrack.
            loop {
                budget = budget.saturating_sub(1);
                if budget == 0 {
                    return Err(ArithmeticError::ConstructionFailed(
                        "backtracking budget exhausted".into(),
                    ));
                }
                let Some((cs, pos)) = stack.pop() else {
                    return Err(ArithmeticError::ConstructionFailed(format!(
                        "no continuation after index {last}"
                    )));
                };
                indices.pop();
                if pos + 1 < cs.len() {
                    indices.push(cs[pos + 1]);
                    stack.push((cs, pos + 1));
                    break;
                }
            }
            continue;
        }
        indices.push(cands[0]);
        stack.push((cands, 0));
    }
    if indices.len() < 2 && max_terms >= 2 {
        return Err(ArithmeticError::DepthInsufficient {
            needed: len + 1,
            available: len,
        });
    }
    let jumps: Vec<bool> = indices.iter().map(|&i| t.jump[i]).collect();
    let seq = CdSequence {
        open_tail: !jumps.last().copied().unwrap_or(true),
        indices,
        bridge_param: a,
        jumps,
    };
    let v = validate_cd_sequence(den, &seq);
    if !v.ok {
        return Err(ArithmeticError::ConstructionFailed(v.failures.join("; ")));
    }
    Ok(seq)
}

/// Re-checks the CD clauses directly against the denominators.
pub fn validate_cd_sequence(den: &Denominators, seq: &CdSequence) -> CdValidation {
    let a = seq.bridge_param;
    let mut failures = Vec::new();
    let mut checked = 0usize;
    let idx = &seq.indices;
    let len = den.len();
    let mut fail = |s: String| failures.push(s);

    let direct_bridge = |l: usize, n: usize| -> Result<(), String> {
        if l >= n {
            return Err(format!("bridge ({l},{n}) not ordered"));
        }
        for i in l..n {
            if den.step_le_pow(i, a) != Some(true) {
                return Err(format!("q_{} ≤ q_{}^{a} not certified", i + 1, i));
            }
        }
        if den.ge_pow(n, l, a) != Some(true) {
            return Err(format!("q_{n} ≥ q_{l}^{a} not certified"));
        }
        if den.le_pow(n, l, a.pow(3)) != Some(true) {
            return Err(format!("q_{n} ≤ q_{l}^{} not certified", a.pow(3)));
        }
        Ok(())
    };

    if idx.is_empty() {
        fail("empty sequence".into());
    } else {
        checked += 1;
        if den.ln_q(idx[0]).hi() != 0.0 {
            fail(format!("Q_0 = q_{} is not 1", idx[0]));
        }
    }
    for w in idx.windows(2) {
        checked += 1;
        if w[0] >= w[1] {
            fail(format!("indices not increasing at {}", w[0]));
        }
    }
    for (k, &n) in idx.iter().enumerate() {
        if n + 1 >= len {
            fail(format!("Q̄_{k} outside the computed range"));
            continue;
        }
        if k + 1 < idx.len() {
            checked += 1;
            if den.le_pow(idx[k + 1], n + 1, a.pow(4)) != Some(true) {
                fail(format!("Q_{} ≤ Q̄_{k}^{} not certified", k + 1, a.pow(4)));
            }
        }
        checked += 1;
        let jump = den.ge_pow(n + 1, n, a) == Some(true);
        if jump != seq.jumps.get(k).copied().unwrap_or(!jump) {
            fail(format!("jump flag mismatch at term {k}"));
        }
        if jump || k == 0 {
            continue;
        }
        if let Err(e) = direct_bridge(idx[k - 1] + 1, n) {
            fail(format!("term {k}: (Q̄_{}, Q_{k}) {e}", k - 1));
        }
        if k + 1 < idx.len() {
            if let Err(e) = direct_bridge(n, idx[k + 1]) {
                fail(format!("term {k}: (Q_{k}, Q_{}) {e}", k + 1));
            }
        } else if !seq.open_tail {
            fail(format!(
                "term {k} needs a successor but the tail is marked closed"
            ));
        }
    }
    CdValidation {
        ok: failures.is_empty(),
        clauses_checked: checked,
        failures,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arithmetic::{expand_continued_fraction, FrequencySpec};
    use num_bigint::BigUint;

    #[test]
    fn golden_first_terms() {
        let f = expand_continued_fraction(&FrequencySpec::golden(), 200).unwrap();
        let d = Denominators::from_frequency(&f, 201, 201).unwrap();
        let s = select_cd_sequence(&d, 8, None).unwrap();
        assert_eq!(&s.indices[..2], &[1, 13]);
        assert!(s.indices.len() >= 3, "{:?}", s.indices);
        assert!(validate_cd_sequence(&d, &s).ok);
    }

    #[test]
    fn golden_deep_logs_only() {
        let f = expand_continued_fraction(&FrequencySpec::golden(), 10).unwrap();
        let d = Denominators::from_frequency(&f, 100_000, 50).unwrap();
        let s = select_cd_sequence(&d, 8, None).unwrap();
        assert!(s.indices.len() >= 5, "{:?}", s.indices);
        for w in s.indices.windows(2).skip(1) {
            let r = w[1] as f64 / w[0] as f64;
            assert!(r > 6.0 && r < 10.0, "{:?}", s.indices);
        }
    }

    #[test]
    fn huge_quotient_is_a_jump() {
        let mut q = vec![BigUint::from(1u32); 80];
        q[4] = BigUint::from(1_000_000u32);
        let d = Denominators::from_quotients(&q, 81);
        let s = select_cd_sequence(&d, 8, None).unwrap();
        assert!(s.indices.contains(&4), "{:?}", s.indices);
        assert!(validate_cd_sequence(&d, &s).ok);
    }

    #[test]
    fn tampered_sequence_fails_validation() {
        let f = expand_continued_fraction(&FrequencySpec::golden(), 200).unwrap();
        let d = Denominators::from_frequency(&f, 201, 201).unwrap();
        let mut s = select_cd_sequence(&d, 8, None).unwrap();
        s.indices[1] = 12;
        assert!(!validate_cd_sequence(&d, &s).ok);
    }
}
