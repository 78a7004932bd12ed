//! Domain types shared across the pipeline: user records and personality label codecs.

use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One attribute cell of a user record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttrValue {
    Number(f64),
    Text(String),
    /// Explicit marker for a missing value, kept so prompts can surface it.
    Unknown,
}

impl AttrValue {
    pub fn is_unknown(&self) -> bool {
        matches!(self, AttrValue::Unknown)
    }

    /// Text as it appears inside a prompt record pair.
    pub fn render(&self) -> String {
        match self {
            AttrValue::Number(x) if x.fract() == 0.0 && x.abs() < 1e15 => format!("{}", *x as i64),
            AttrValue::Number(x) => format!("{x}"),
            AttrValue::Text(s) => s.clone(),
            AttrValue::Unknown => "Unknown".to_string(),
        }
    }
}

/// Returns true when an attribute key names a personality label (any case).
pub fn is_label_key(key: &str) -> bool {
    let k = key.trim().to_ascii_lowercase();
    k == "mbti" || k == "enneagram"
}

/// A user's fragmented record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserRecord {
    pub user_id: usize,
    pub username: String,
    /// Attribute name to value, in presentation order.
    pub attributes: IndexMap<String, AttrValue>,
    pub follower_count: u64,
    pub group_names: Vec<String>,
    pub mbti: Option<MbtiCode>,
    pub enneagram: Option<Enneagram>,
}

impl UserRecord {
    pub fn label(&self, scheme: Scheme) -> Option<PersonalityLabel> {
        match scheme {
            Scheme::Mbti16 => self.mbti.map(PersonalityLabel::from),
            Scheme::Enneagram9 => self.enneagram.map(PersonalityLabel::from),
        }
    }

    pub fn has_labels(&self) -> bool {
        self.mbti.is_some() || self.enneagram.is_some()
    }
}

/// An MBTI type. Each dichotomy maps E/S/T/J to 0 and I/N/F/P to 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MbtiCode(u8);

const MBTI_LETTERS: [[char; 2]; 4] = [['E', 'I'], ['S', 'N'], ['T', 'F'], ['J', 'P']];

impl MbtiCode {
    pub fn from_bits(bits: [bool; 4]) -> Self {
        let idx = bits
            .iter()
            .fold(0u8, |acc, &b| (acc << 1) | u8::from(b));
        MbtiCode(idx)
    }

    pub fn from_class_index(index: usize) -> Option<Self> {
        (index < 16).then_some(MbtiCode(index as u8))
    }

    /// The dichotomy bits (t1, t2, t3, t4).
    pub fn bits(self) -> [bool; 4] {
        [
            self.0 & 8 != 0,
            self.0 & 4 != 0,
            self.0 & 2 != 0,
            self.0 & 1 != 0,
        ]
    }

    /// `8·t1 + 4·t2 + 2·t3 + t4`.
    pub fn class_index(self) -> usize {
        self.0 as usize
    }

    pub fn all() -> impl Iterator<Item = MbtiCode> {
        (0..16u8).map(MbtiCode)
    }
}

impl fmt::Display for MbtiCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (pos, bit) in self.bits().iter().enumerate() {
            write!(f, "{}", MBTI_LETTERS[pos][usize::from(*bit)])?;
        }
        Ok(())
    }
}

impl FromStr for MbtiCode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_mbti(s)
    }
}

impl Serialize for MbtiCode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MbtiCode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        parse_mbti(&s).map_err(serde::de::Error::custom)
    }
}

/// Parses a four-letter MBTI code, case-insensitively.
///
/// Positions in errors are 1-based.
pub fn parse_mbti(code: &str) -> Result<MbtiCode> {
    let chars: Vec<char> = code.trim().chars().collect();
    if chars.len() != 4 {
        return Err(Error::MbtiParse {
            code: code.to_string(),
            position: chars.len().min(4) + 1,
            reason: format!("expected 4 letters, found {}", chars.len()),
        });
    }
    let mut bits = [false; 4];
    for (pos, c) in chars.iter().enumerate() {
        let upper = c.to_ascii_uppercase();
        let [zero, one] = MBTI_LETTERS[pos];
        bits[pos] = if upper == zero {
            false
        } else if upper == one {
            true
        } else {
            return Err(Error::MbtiParse {
                code: code.to_string(),
                position: pos + 1,
                reason: format!("expected {zero} or {one}, found {c:?}"),
            });
        };
    }
    Ok(MbtiCode::from_bits(bits))
}

/// An enneagram core type in 1..9.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Enneagram(u8);

impl Enneagram {
    pub fn new(core: u8) -> Option<Self> {
        (1..=9).contains(&core).then_some(Enneagram(core))
    }

    pub fn core(self) -> u8 {
        self.0
    }

    pub fn class_index(self) -> usize {
        self.0 as usize - 1
    }
}

impl TryFrom<u8> for Enneagram {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        Enneagram::new(v).ok_or_else(|| format!("enneagram {v} outside 1..9"))
    }
}

impl From<Enneagram> for u8 {
    fn from(e: Enneagram) -> u8 {
        e.0
    }
}

impl fmt::Display for Enneagram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Parses an enneagram field, keeping the core type and discarding wing notation ("4w5" -> 4).
pub fn parse_enneagram(raw: &str) -> Result<Enneagram> {
    let trimmed = raw.trim();
    let mut chars = trimmed.chars();
    let first = chars.next().ok_or_else(|| Error::EnneagramParse(raw.to_string()))?;
    // A second digit would make this a multi-digit number like "10".
    if chars.next().is_some_and(|c| c.is_ascii_digit()) {
        return Err(Error::EnneagramParse(raw.to_string()));
    }
    first
        .to_digit(10)
        .and_then(|d| Enneagram::new(d as u8))
        .ok_or_else(|| Error::EnneagramParse(raw.to_string()))
}

/// Which personality taxonomy a label belongs to.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    #[default]
    #[serde(alias = "mbti")]
    Mbti16,
    #[serde(alias = "enneagram")]
    Enneagram9,
}

impl Scheme {
    pub fn num_classes(self) -> usize {
        match self {
            Scheme::Mbti16 => 16,
            Scheme::Enneagram9 => 9,
        }
    }

    pub fn class_name(self, index: usize) -> String {
        match self {
            Scheme::Mbti16 => MbtiCode::from_class_index(index)
                .map(|c| c.to_string())
                .unwrap_or_else(|| format!("#{index}")),
            Scheme::Enneagram9 => format!("{}", index + 1),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Mbti16 => "mbti",
            Scheme::Enneagram9 => "enneagram",
        }
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mbti" | "mbti16" => Ok(Scheme::Mbti16),
            "enneagram" | "enneagram9" => Ok(Scheme::Enneagram9),
            other => Err(Error::Precondition(format!("unknown label scheme {other:?}"))),
        }
    }
}

/// A multi-class personality target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PersonalityLabel {
    scheme: Scheme,
    class_index: usize,
}

impl PersonalityLabel {
    pub fn new(scheme: Scheme, class_index: usize) -> Result<Self> {
        if class_index >= scheme.num_classes() {
            return Err(Error::Precondition(format!(
                "class index {class_index} out of range for {} classes",
                scheme.num_classes()
            )));
        }
        Ok(PersonalityLabel {
            scheme,
            class_index,
        })
    }

    pub fn scheme(self) -> Scheme {
        self.scheme
    }

    pub fn class_index(self) -> usize {
        self.class_index
    }
}

impl From<MbtiCode> for PersonalityLabel {
    fn from(code: MbtiCode) -> Self {
        PersonalityLabel {
            scheme: Scheme::Mbti16,
            class_index: code.class_index(),
        }
    }
}

impl From<Enneagram> for PersonalityLabel {
    fn from(e: Enneagram) -> Self {
        PersonalityLabel {
            scheme: Scheme::Enneagram9,
            class_index: e.class_index(),
        }
    }
}

/// One-hot encoding of a label over its scheme's classes.
pub fn one_hot(label: PersonalityLabel) -> Vec<f64> {
    let mut v = vec![0.0; label.scheme.num_classes()];
    v[label.class_index] = 1.0;
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn infp_is_all_ones() {
        let c = parse_mbti("INFP").unwrap();
        assert_eq!(c.bits(), [true; 4]);
        assert_eq!(c.class_index(), 15);
    }

    #[test]
    fn estj_is_all_zeros() {
        let c = parse_mbti("estj").unwrap();
        assert_eq!(c.bits(), [false; 4]);
        assert_eq!(c.class_index(), 0);
    }

    #[test]
    fn bad_letter_reports_position() {
        match parse_mbti("AXFP") {
            Err(Error::MbtiParse { position, .. }) => assert_eq!(position, 1),
            other => panic!("unexpected {other:?}"),
        }
        match parse_mbti("INXP") {
            Err(Error::MbtiParse { position, .. }) => assert_eq!(position, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_mbti("INF").is_err());
        assert!(parse_mbti("INFPX").is_err());
    }

    #[test]
    fn enneagram_core_and_wings() {
        assert_eq!(parse_enneagram("5").unwrap().core(), 5);
        assert_eq!(parse_enneagram("4w5").unwrap().core(), 4);
        assert_eq!(parse_enneagram(" 9w1 ").unwrap().core(), 9);
        assert!(parse_enneagram("0").is_err());
        assert!(parse_enneagram("").is_err());
        assert!(parse_enneagram("10").is_err());
        assert!(parse_enneagram("x").is_err());
    }

    #[test]
    fn one_hot_examples() {
        let v = one_hot(PersonalityLabel::new(Scheme::Mbti16, 0).unwrap());
        assert_eq!(v.len(), 16);
        assert_eq!(v[0], 1.0);
        assert!(v[1..].iter().all(|&x| x == 0.0));

        let v = one_hot(PersonalityLabel::new(Scheme::Enneagram9, 8).unwrap());
        assert_eq!(v.len(), 9);
        assert_eq!(v[8], 1.0);
        assert_eq!(v.iter().sum::<f64>(), 1.0);

        assert!(PersonalityLabel::new(Scheme::Enneagram9, 9).is_err());
    }

    #[test]
    fn class_index_is_a_bijection() {
        let mut seen = [false; 16];
        for code in MbtiCode::all() {
            let parsed = parse_mbti(&code.to_string()).unwrap();
            assert_eq!(parsed, code);
            assert!(!seen[parsed.class_index()]);
            seen[parsed.class_index()] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn serde_roundtrip() {
        let rec = UserRecord {
            user_id: 0,
            username: "a".into(),
            attributes: [("Gender".to_string(), AttrValue::Text("Female".into())), ("Age".to_string(), AttrValue::Unknown)]
                .into_iter()
                .collect(),
            follower_count: 3,
            group_names: vec!["book".into()],
            mbti: Some(parse_mbti("ENFJ").unwrap()),
            enneagram: Enneagram::new(2),
        };
        let json = serde_json::to_string(&rec).unwrap();
        let back: UserRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(back, rec);
    }

    proptest! {
        #[test]
        fn one_hot_has_unit_l1_norm(idx in 0usize..16, ennea in 0usize..9) {
            let a = one_hot(PersonalityLabel::new(Scheme::Mbti16, idx).unwrap());
            let b = one_hot(PersonalityLabel::new(Scheme::Enneagram9, ennea).unwrap());
            prop_assert_eq!(a.iter().map(|x| x.abs()).sum::<f64>(), 1.0);
            prop_assert_eq!(b.iter().map(|x| x.abs()).sum::<f64>(), 1.0);
            prop_assert_eq!(a[idx], 1.0);
        }

        #[test]
        fn mixed_case_parses_to_same_code(idx in 0usize..16, mask in 0u8..16) {
            let code = MbtiCode::from_class_index(idx).unwrap();
            let s: String = code
                .to_string()
                .chars()
                .enumerate()
                .map(|(i, c)| if mask & (1 << i) != 0 { c.to_ascii_lowercase() } else { c })
                .collect();
            prop_assert_eq!(parse_mbti(&s).unwrap(), code);
        }
    }
}
