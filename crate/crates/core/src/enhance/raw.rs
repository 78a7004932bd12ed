//! Baseline node features built directly from the profile attributes.
//!
//! Column order:
//! 1. numeric attributes, by attribute name, standardised over observed values
//!    (population standard deviation; missing values and constant columns are 0);
//! 2. categorical attributes, by attribute name, one column per observed value
//!    in sorted order;
//! 3. one multi-hot column per group, by group name.
//!
//! An attribute is numeric when every observed value is a number. `Name`,
//! `About` and `Groups` are free text or covered by the group block and are
//! left out of the categorical block, as are label keys.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::Array2;

use crate::domain::{is_label_key, AttrValue};
use crate::error::Result;
use crate::features::Features;
use crate::ingest::DatasetBundle;

const EXCLUDED: [&str; 3] = ["Name", "About", "Groups"];

#[derive(Debug, Clone)]
pub struct RawFeatures {
    pub features: Features,
    pub column_names: Vec<String>,
}

pub fn raw_feature_matrix(bundle: &DatasetBundle) -> Result<RawFeatures> {
    let n = bundle.num_users();
    // attribute -> (all numeric?, observed values)
    let mut seen: BTreeMap<&str, (bool, BTreeSet<String>)> = BTreeMap::new();
    for u in &bundle.users {
        for (k, v) in &u.attributes {
            if EXCLUDED.contains(&k.as_str()) || is_label_key(k) {
                continue;
            }
            let entry = seen.entry(k.as_str()).or_insert((true, BTreeSet::new()));
            match v {
                AttrValue::Unknown => {}
                AttrValue::Number(_) => {
                    entry.1.insert(v.render());
                }
                AttrValue::Text(_) => {
                    entry.0 = false;
                    entry.1.insert(v.render());
                }
            }
        }
    }

    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut names = Vec::new();

    for (&attr, _) in seen.iter().filter(|(_, (numeric, vals))| *numeric && !vals.is_empty()) {
        let values: Vec<Option<f64>> = bundle
            .users
            .iter()
            .map(|u| match u.attributes.get(attr) {
                Some(AttrValue::Number(x)) => Some(*x),
                _ => None,
            })
            .collect();
        columns.push(standardize(&values));
        names.push(attr.to_string());
    }

    for (&attr, (_, vocab)) in seen.iter().filter(|(_, (numeric, _))| !*numeric) {
        for value in vocab {
            let col = bundle
                .users
                .iter()
                .map(|u| match u.attributes.get(attr) {
                    Some(v) if !v.is_unknown() && v.render() == *value => 1.0,
                    _ => 0.0,
                })
                .collect();
            columns.push(col);
            names.push(format!("{attr}={value}"));
        }
    }

    for (group, members) in &bundle.group_index {
        let mut col = vec![0.0; n];
        for &m in members {
            col[m] = 1.0;
        }
        columns.push(col);
        names.push(format!("group:{group}"));
    }

    let mut out = Array2::zeros((n, columns.len()));
    for (j, col) in columns.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            out[[i, j]] = *v;
        }
    }
    Ok(RawFeatures {
        features: Features::try_new(out)?,
        column_names: names,
    })
}

fn standardize(values: &[Option<f64>]) -> Vec<f64> {
    let observed: Vec<f64> = values.iter().flatten().copied().collect();
    let m = observed.len() as f64;
    let mean = observed.iter().sum::<f64>() / m;
    let var = observed.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / m;
    let sd = var.sqrt();
    values
        .iter()
        .map(|v| match v {
            Some(x) if sd > 0.0 => (x - mean) / sd,
            _ => 0.0,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::UserRecord;
    use indexmap::IndexMap;

    fn user(id: usize, attrs: &[(&str, AttrValue)], groups: &[&str]) -> UserRecord {
        UserRecord {
            user_id: id,
            username: format!("u{id}"),
            attributes: attrs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect::<IndexMap<_, _>>(),
            follower_count: 0,
            group_names: groups.iter().map(|g| g.to_string()).collect(),
            mbti: None,
            enneagram: None,
        }
    }

    fn text(s: &str) -> AttrValue {
        AttrValue::Text(s.into())
    }

    #[test]
    fn gender_contributes_two_columns() {
        let b = DatasetBundle::from_parts(
            vec![user(0, &[("Gender", text("F"))], &[]), user(1, &[("Gender", text("M"))], &[])],
            vec![],
        )
        .unwrap();
        let r = raw_feature_matrix(&b).unwrap();
        assert_eq!(r.column_names, vec!["Gender=F", "Gender=M"]);
        assert_eq!(r.features.as_array(), &ndarray::array![[1.0, 0.0], [0.0, 1.0]]);
    }

    #[test]
    fn followers_standardise_to_plus_minus_one() {
        let b = DatasetBundle::from_parts(
            vec![
                user(0, &[("Followers", AttrValue::Number(0.0))], &[]),
                user(1, &[("Followers", AttrValue::Number(100.0))], &[]),
                user(2, &[("Followers", AttrValue::Unknown)], &[]),
            ],
            vec![],
        )
        .unwrap();
        let r = raw_feature_matrix(&b).unwrap();
        // mean 50, population sd 50
        assert_eq!(r.features.view().column(0).to_vec(), vec![-1.0, 1.0, 0.0]);
    }

    #[test]
    fn missing_gender_is_all_zero_block() {
        let b = DatasetBundle::from_parts(
            vec![
                user(0, &[("Gender", text("F"))], &["chess"]),
                user(1, &[("Gender", AttrValue::Unknown)], &["chess", "art"]),
            ],
            vec![],
        )
        .unwrap();
        let r = raw_feature_matrix(&b).unwrap();
        assert_eq!(r.column_names, vec!["Gender=F", "group:art", "group:chess"]);
        assert_eq!(r.features.view().row(1).to_vec(), vec![0.0, 1.0, 1.0]);
    }

    #[test]
    fn free_text_and_labels_are_skipped() {
        let b = DatasetBundle::from_parts(
            vec![user(
                0,
                &[("Name", text("x")), ("About", text("y")), ("MBTI", text("INTJ")), ("Age", AttrValue::Number(3.0))],
                &[],
            )],
            vec![],
        )
        .unwrap();
        let r = raw_feature_matrix(&b).unwrap();
        assert_eq!(r.column_names, vec!["Age"]);
        assert_eq!(r.features.view()[[0, 0]], 0.0);
    }
}
