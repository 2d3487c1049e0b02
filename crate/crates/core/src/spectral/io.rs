//! JSON file format for torus functions.

use std::collections::BTreeSet;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{FourierIndex, PhiFunction, SpectralError, TorusFunction};

/// Relative tolerance for the Hermitian check on load.
pub const HERMITIAN_TOL: f64 = 1e-14;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeEntry {
    pub l: i32,
    pub k: [i32; 2],
    pub re: f64,
    pub im: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TorusFunctionFile {
    pub s: f64,
    pub r: f64,
    pub modes: Vec<ModeEntry>,
}

const INDEX_LIMIT: i32 = 1 << 20;

impl TryFrom<TorusFunctionFile> for TorusFunction {
    type Error = SpectralError;

    fn try_from(file: TorusFunctionFile) -> Result<Self, SpectralError> {
        let bad = |m: String| SpectralError::InvalidFormat(m);
        if !(file.s.is_finite() && file.s >= 0.0 && file.r.is_finite() && file.r >= 0.0) {
            return Err(bad(format!(
                "strip widths must be finite and non-negative, got s={}, r={}",
                file.s, file.r
            )));
        }
        let mut seen = BTreeSet::new();
        let mut modes = Vec::with_capacity(file.modes.len());
        for m in &file.modes {
            if m.l.abs() > INDEX_LIMIT || m.k[0].abs() > INDEX_LIMIT || m.k[1].abs() > INDEX_LIMIT {
                return Err(bad(format!(
                    "mode index out of range: l={}, k={:?}",
                    m.l, m.k
                )));
            }
            if !(m.re.is_finite() && m.im.is_finite()) {
                return Err(bad(format!(
                    "non-finite coefficient at l={}, k={:?}",
                    m.l, m.k
                )));
            }
            let i = FourierIndex { l: m.l, k: m.k };
            if !seen.insert(i) {
                return Err(bad(format!("duplicate mode l={}, k={:?}", m.l, m.k)));
            }
            modes.push((i, Complex64::new(m.re, m.im)));
        }
        let f = TorusFunction::from_modes(modes).with_strips(file.s, file.r);
        let defect = f.hermitian_defect();
        if defect > HERMITIAN_TOL {
            return Err(SpectralError::NotHermitian { defect });
        }
        Ok(f)
    }
}

impl From<&TorusFunction> for TorusFunctionFile {
    fn from(f: &TorusFunction) -> Self {
        let (s, r) = f.strips();
        TorusFunctionFile {
            s,
            r,
            modes: f
                .modes()
                .map(|(i, c)| ModeEntry {
                    l: i.l,
                    k: i.k,
                    re: c.re,
                    im: c.im,
                })
                .collect(),
        }
    }
}

impl TorusFunction {
    pub fn from_json(text: &str) -> Result<Self, SpectralError> {
        let file: TorusFunctionFile =
            serde_json::from_str(text).map_err(|e| SpectralError::InvalidFormat(e.to_string()))?;
        file.try_into()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&TorusFunctionFile::from(self)).expect("plain data serializes")
    }
}

impl PhiFunction {
    pub fn from_json(text: &str) -> Result<Self, SpectralError> {
        PhiFunction::from_torus(TorusFunction::from_json(text)?)
    }

    pub fn to_json(&self) -> String {
        self.as_torus().to_json()
    }
}

impl Serialize for TorusFunction {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        TorusFunctionFile::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for TorusFunction {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let file = TorusFunctionFile::deserialize(d)?;
        TorusFunction::try_from(file).map_err(serde::de::Error::custom)
    }
}

impl Serialize for PhiFunction {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.as_torus().serialize(s)
    }
}

impl<'de> Deserialize<'de> for PhiFunction {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let f = TorusFunction::deserialize(d)?;
        PhiFunction::from_torus(f).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_canonical_order() {
        let f = (&TorusFunction::cos_mode(1, [2, -1], 0.3)
            + &TorusFunction::sin_mode(0, [1, 0], 0.1))
            .with_strips(0.5, 0.25);
        let text = f.to_json();
        let back = TorusFunction::from_json(&text).unwrap();
        assert_eq!(back, f);
        let file: TorusFunctionFile = serde_json::from_str(&text).unwrap();
        let idx: Vec<FourierIndex> = file
            .modes
            .iter()
            .map(|m| FourierIndex { l: m.l, k: m.k })
            .collect();
        let mut sorted = idx.clone();
        sorted.sort();
        assert_eq!(idx, sorted);
    }

    #[test]
    fn rejects_non_hermitian_and_duplicates() {
        let t = r#"{"s":0.1,"r":0.1,"modes":[{"l":1,"k":[0,0],"re":1.0,"im":0.0}]}"#;
        assert!(matches!(
            TorusFunction::from_json(t),
            Err(SpectralError::NotHermitian { .. })
        ));
        let t = r#"{"s":0.1,"r":0.1,"modes":[{"l":0,"k":[0,0],"re":1.0,"im":0.0},{"l":0,"k":[0,0],"re":1.0,"im":0.0}]}"#;
        assert!(matches!(
            TorusFunction::from_json(t),
            Err(SpectralError::InvalidFormat(_))
        ));
        let t = r#"{"s":-1,"r":0.1,"modes":[]}"#;
        assert!(TorusFunction::from_json(t).is_err());
    }

    #[test]
    fn phi_loader_rejects_theta_modes() {
        let f = TorusFunction::cos_mode(1, [0, 0], 1.0);
        assert_eq!(
            PhiFunction::from_json(&f.to_json()),
            Err(SpectralError::NotPhiFunction)
        );
    }
}
