use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::{AttrValue, Scheme, UserRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionRow {
    pub label: String,
    pub count: usize,
    pub proportion: f64,
}

/// Label frequencies over the users carrying a label of `scheme`, one row per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub scheme: Scheme,
    pub labeled: usize,
    pub rows: Vec<DistributionRow>,
}

pub fn distribution(users: &[UserRecord], scheme: Scheme) -> Result<Distribution> {
    let mut counts = vec![0usize; scheme.num_classes()];
    for u in users {
        if let Some(l) = u.label(scheme) {
            counts[l.class_index()] += 1;
        }
    }
    let labeled: usize = counts.iter().sum();
    if labeled == 0 {
        return Err(Error::Precondition(format!("no user carries a {} label", scheme.name())));
    }
    let rows = counts
        .into_iter()
        .enumerate()
        .map(|(c, count)| DistributionRow {
            label: scheme.class_name(c),
            count,
            proportion: count as f64 / labeled as f64,
        })
        .collect();
    Ok(Distribution { scheme, labeled, rows })
}

/// A categorical view of a user.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Axis {
    Mbti,
    Enneagram,
    /// One MBTI letter position, 1 to 4.
    MbtiDichotomy(u8),
    /// Quartile of the `Followers` attribute among users that report it.
    FollowerQuartile,
    Attribute(String),
}

impl Axis {
    /// `mbti`, `enneagram`, `mbti1`..`mbti4`, `followers-quartile`, or an attribute name
    /// present on at least one user (matched case-insensitively).
    pub fn parse(name: &str, users: &[UserRecord]) -> Result<Axis> {
        let lower = name.trim().to_ascii_lowercase();
        match lower.as_str() {
            "mbti" => return Ok(Axis::Mbti),
            "enneagram" => return Ok(Axis::Enneagram),
            "followers-quartile" => return Ok(Axis::FollowerQuartile),
            _ => {}
        }
        if let Some(d) = lower.strip_prefix("mbti").and_then(|d| d.parse::<u8>().ok()) {
            if (1..=4).contains(&d) {
                return Ok(Axis::MbtiDichotomy(d));
            }
        }
        users
            .iter()
            .flat_map(|u| u.attributes.keys())
            .find(|k| k.eq_ignore_ascii_case(name.trim()))
            .map(|k| Axis::Attribute(k.clone()))
            .ok_or_else(|| Error::Precondition(format!("unknown crosstab axis {name:?}")))
    }

    pub fn name(&self) -> String {
        match self {
            Axis::Mbti => "MBTI".into(),
            Axis::Enneagram => "Enneagram".into(),
            Axis::MbtiDichotomy(d) => format!("MBTI letter {d}"),
            Axis::FollowerQuartile => "Followers quartile".into(),
            Axis::Attribute(a) => a.clone(),
        }
    }

    /// Category per user plus a sort key, `None` where the value is missing.
    fn values(&self, users: &[UserRecord]) -> Vec<Option<(i64, String)>> {
        match self {
            Axis::Mbti => users
                .iter()
                .map(|u| u.mbti.map(|m| (m.class_index() as i64, m.to_string())))
                .collect(),
            Axis::Enneagram => users
                .iter()
                .map(|u| u.enneagram.map(|e| (e.class_index() as i64, e.to_string())))
                .collect(),
            Axis::MbtiDichotomy(d) => users
                .iter()
                .map(|u| {
                    u.mbti.map(|m| {
                        let pos = *d as usize - 1;
                        let letter = m.to_string().chars().nth(pos).expect("four letters");
                        (m.bits()[pos] as i64, letter.to_string())
                    })
                })
                .collect(),
            Axis::FollowerQuartile => {
                let counts: Vec<Option<f64>> = users
                    .iter()
                    .map(|u| match u.attributes.get("Followers") {
                        Some(AttrValue::Number(x)) => Some(*x),
                        _ => None,
                    })
                    .collect();
                let mut known: Vec<f64> = counts.iter().flatten().copied().collect();
                known.sort_by(f64::total_cmp);
                let cuts = [0.25, 0.5, 0.75].map(|q| quantile(&known, q));
                counts
                    .into_iter()
                    .map(|c| {
                        c.map(|x| {
                            let q = cuts.iter().filter(|&&t| x > t).count();
                            (q as i64, format!("Q{}", q + 1))
                        })
                    })
                    .collect()
            }
            Axis::Attribute(a) => users
                .iter()
                .map(|u| match u.attributes.get(a) {
                    None | Some(AttrValue::Unknown) => None,
                    Some(v) => Some((0, v.render())),
                })
                .collect(),
        }
    }
}

/// Linear-interpolated quantile of sorted values.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Crosstab {
    pub row_axis: String,
    pub col_axis: String,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub counts: Vec<Vec<usize>>,
    /// Users missing either value.
    pub excluded: usize,
}

impl Crosstab {
    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }
}

/// Counts over users with both values present; categories are the observed ones.
pub fn crosstab(users: &[UserRecord], a: &Axis, b: &Axis) -> Result<Crosstab> {
    let va = a.values(users);
    let vb = b.values(users);
    let mut rows: BTreeMap<(i64, String), usize> = BTreeMap::new();
    let mut cols: BTreeMap<(i64, String), usize> = BTreeMap::new();
    let mut pairs = Vec::new();
    let mut excluded = 0;
    for (x, y) in va.into_iter().zip(vb) {
        match (x, y) {
            (Some(x), Some(y)) => {
                rows.insert(x.clone(), 0);
                cols.insert(y.clone(), 0);
                pairs.push((x, y));
            }
            _ => excluded += 1,
        }
    }
    for (i, v) in rows.values_mut().enumerate() {
        *v = i;
    }
    for (i, v) in cols.values_mut().enumerate() {
        *v = i;
    }
    let mut counts = vec![vec![0usize; cols.len()]; rows.len()];
    for (x, y) in &pairs {
        counts[rows[x]][cols[y]] += 1;
    }
    Ok(Crosstab {
        row_axis: a.name(),
        col_axis: b.name(),
        row_labels: rows.into_keys().map(|k| k.1).collect(),
        col_labels: cols.into_keys().map(|k| k.1).collect(),
        counts,
        excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{parse_mbti, Enneagram};
    use indexmap::IndexMap;

    fn user(id: usize, mbti: Option<&str>, gender: Option<&str>, followers: Option<f64>) -> UserRecord {
        let mut attributes = IndexMap::new();
        attributes.insert(
            "Gender".to_string(),
            gender.map_or(AttrValue::Unknown, |g| AttrValue::Text(g.into())),
        );
        attributes.insert(
            "Followers".to_string(),
            followers.map_or(AttrValue::Unknown, AttrValue::Number),
        );
        UserRecord {
            user_id: id,
            username: String::new(),
            attributes,
            follower_count: followers.unwrap_or(0.0) as u64,
            group_names: vec![],
            mbti: mbti.map(|m| parse_mbti(m).unwrap()),
            enneagram: None,
        }
    }

    #[test]
    fn infp_share() {
        let users: Vec<UserRecord> = (0..100)
            .map(|i| user(i, Some(if i < 12 { "INFP" } else { "ESTJ" }), None, None))
            .collect();
        let d = distribution(&users, Scheme::Mbti16).unwrap();
        let infp = d.rows.iter().find(|r| r.label == "INFP").unwrap();
        assert_eq!(infp.proportion, 0.12);
        assert!((d.rows.iter().map(|r| r.proportion).sum::<f64>() - 1.0).abs() < 1e-9);
        assert_eq!(d.rows.len(), 16);
        assert!(distribution(&users, Scheme::Enneagram9).is_err());
    }

    #[test]
    fn mbti_by_gender_by_hand() {
        let users = vec![
            user(0, Some("INFP"), Some("F"), None),
            user(1, Some("INFP"), Some("M"), None),
            user(2, Some("ESTJ"), Some("F"), None),
            user(3, Some("INFP"), Some("F"), None),
            user(4, Some("ESTJ"), None, None),
        ];
        let ax = Axis::parse("mbti", &users).unwrap();
        let g = Axis::parse("gender", &users).unwrap();
        let t = crosstab(&users, &ax, &g).unwrap();
        // ESTJ sorts before INFP by class index
        assert_eq!(t.row_labels, vec!["ESTJ", "INFP"]);
        assert_eq!(t.col_labels, vec!["F", "M"]);
        assert_eq!(t.counts, vec![vec![1, 0], vec![2, 1]]);
        assert_eq!(t.excluded, 1);
        assert_eq!(t.total(), 4);
    }

    #[test]
    fn self_crosstab_is_diagonal() {
        let users: Vec<UserRecord> = ["INFP", "INTJ", "INFP", "ENFP"]
            .iter()
            .enumerate()
            .map(|(i, m)| user(i, Some(m), None, None))
            .collect();
        let t = crosstab(&users, &Axis::Mbti, &Axis::Mbti).unwrap();
        for (i, row) in t.counts.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                assert!(i == j || c == 0);
            }
        }
    }

    #[test]
    fn dichotomy_and_quartiles() {
        let users: Vec<UserRecord> = (0..8)
            .map(|i| user(i, Some(if i % 2 == 0 { "INFP" } else { "ESTJ" }), None, Some(i as f64 * 10.0)))
            .collect();
        let t = crosstab(&users, &Axis::MbtiDichotomy(2), &Axis::FollowerQuartile).unwrap();
        assert_eq!(t.row_labels, vec!["S", "N"]);
        assert_eq!(t.col_labels, vec!["Q1", "Q2", "Q3", "Q4"]);
        assert_eq!(t.counts.iter().flatten().sum::<usize>(), 8);
        assert_eq!(t.counts.iter().map(|r| r[0]).sum::<usize>(), 2);
    }

    #[test]
    fn enneagram_axis_and_unknown_axis() {
        let mut users = vec![user(0, Some("INFP"), Some("F"), None)];
        users[0].enneagram = Enneagram::new(4);
        let t = crosstab(&users, &Axis::Enneagram, &Axis::Mbti).unwrap();
        assert_eq!(t.counts, vec![vec![1]]);
        assert!(Axis::parse("shoe size", &users).is_err());
        assert!(Axis::parse("mbti5", &users).is_err());
    }
}
