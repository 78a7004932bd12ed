//! Loading, validation and anonymisation of the raw dataset files.
//!
//! Users are line-delimited JSON objects with a required `id` field. Edges are
//! comma-separated with a `src,dst,kind` header. External ids are remapped to
//! dense indices in order of first appearance in the users file.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use log::warn;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::domain::{is_label_key, parse_enneagram, parse_mbti, AttrValue, Scheme, UserRecord};
use crate::error::{Error, Result};

/// Kind of a pairwise interaction link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkKind {
    Follow,
    Quote,
    Mention,
    Other,
}

impl LinkKind {
    /// Unknown strings map to [`LinkKind::Other`].
    pub fn parse(s: &str) -> Self {
        match s.trim().to_ascii_lowercase().as_str() {
            "follow" | "following" | "follows" => LinkKind::Follow,
            "quote" | "quoting" | "quotes" => LinkKind::Quote,
            "mention" | "mentioning" | "mentions" => LinkKind::Mention,
            _ => LinkKind::Other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub src: usize,
    pub dst: usize,
    pub kind: LinkKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetBundle {
    pub users: Vec<UserRecord>,
    pub edges: Vec<EdgeRecord>,
    /// Group name to sorted member ids.
    pub group_index: BTreeMap<String, Vec<usize>>,
    /// External id of each dense user id.
    pub external_ids: Vec<String>,
    /// Non-fatal problems found while loading.
    pub warnings: Vec<String>,
}

/// Known optional user fields and the attribute name they are presented under.
const KNOWN_FIELDS: [(&str, &str); 9] = [
    ("username", "Name"),
    ("gender", "Gender"),
    ("sexual", "Sexual"),
    ("location", "Location"),
    ("about", "About"),
    ("occupation", "Occupation"),
    ("relationship", "Relationship"),
    ("followers", "Followers"),
    ("groups", "Groups"),
];

impl DatasetBundle {
    /// Builds a bundle from in-memory records, deriving the group index.
    pub fn from_parts(users: Vec<UserRecord>, edges: Vec<EdgeRecord>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for (i, u) in users.iter().enumerate() {
            if u.user_id != i {
                return Err(Error::Precondition(format!(
                    "user ids must be dense: position {i} holds id {}",
                    u.user_id
                )));
            }
            if !seen.insert(u.user_id) {
                return Err(Error::DuplicateUser(u.user_id.to_string()));
            }
        }
        let n = users.len();
        let mut warnings = Vec::new();
        let edges = edges
            .into_iter()
            .filter(|e| {
                let ok = e.src < n && e.dst < n && e.src != e.dst;
                if !ok {
                    warnings.push(format!("dropped edge {} -> {}", e.src, e.dst));
                }
                ok
            })
            .collect();
        let group_index = build_group_index(&users);
        let external_ids = (0..n).map(|i| i.to_string()).collect();
        Ok(DatasetBundle {
            users,
            edges,
            group_index,
            external_ids,
            warnings,
        })
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    /// Labels of every user under `scheme`, `None` where unlabeled.
    pub fn labels(&self, scheme: Scheme) -> Vec<Option<usize>> {
        self.users
            .iter()
            .map(|u| u.label(scheme).map(|l| l.class_index()))
            .collect()
    }
}

fn build_group_index(users: &[UserRecord]) -> BTreeMap<String, Vec<usize>> {
    let mut index: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for u in users {
        for g in &u.group_names {
            index.entry(g.clone()).or_default().push(u.user_id);
        }
    }
    for members in index.values_mut() {
        members.sort_unstable();
        members.dedup();
    }
    index
}

pub fn load_dataset(users_path: &Path, edges_path: &Path) -> Result<DatasetBundle> {
    let users = File::open(users_path).map_err(|e| Error::io(users_path, e))?;
    let edges = File::open(edges_path).map_err(|e| Error::io(edges_path, e))?;
    load_dataset_from(BufReader::new(users), users_path, edges, edges_path)
}

/// Same as [`load_dataset`] over arbitrary readers; the paths are only used in messages.
pub fn load_dataset_from<U: BufRead, E: Read>(
    users: U,
    users_path: &Path,
    edges: E,
    edges_path: &Path,
) -> Result<DatasetBundle> {
    let mut warnings = Vec::new();
    let mut id_map: IndexMap<String, usize> = IndexMap::new();
    let mut records = Vec::new();

    for (lineno, line) in users.lines().enumerate() {
        let line = line.map_err(|e| Error::io(users_path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| Error::MalformedLine {
            path: users_path.to_path_buf(),
            line: lineno + 1,
            message,
        };
        let obj = match serde_json::from_str::<Value>(&line) {
            Ok(Value::Object(map)) => map,
            Ok(_) => return Err(malformed("expected a JSON object".into())),
            Err(e) => return Err(malformed(e.to_string())),
        };
        let ext_id = match obj.get("id") {
            Some(Value::String(s)) => s.clone(),
            Some(Value::Number(n)) => n.to_string(),
            _ => return Err(malformed("missing or invalid `id`".into())),
        };
        if id_map.contains_key(&ext_id) {
            return Err(Error::DuplicateUser(ext_id));
        }
        let user_id = id_map.len();
        id_map.insert(ext_id.clone(), user_id);
        let record = parse_user(user_id, &obj, &mut |w| {
            warnings.push(format!("{}:{}: {w}", users_path.display(), lineno + 1))
        })
        .map_err(malformed)?;
        records.push(record);
    }

    let mut edge_list = Vec::new();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(edges);
    let header_err = |message: String| Error::MalformedLine {
        path: edges_path.to_path_buf(),
        line: 1,
        message,
    };
    let headers = rdr.headers().map_err(|e| header_err(e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let (Some(src_col), Some(dst_col)) = (col("src"), col("dst")) else {
        return Err(header_err("header must contain `src,dst,kind`".into()));
    };
    let kind_col = col("kind");
    for row in rdr.records() {
        let row = row.map_err(|e| Error::MalformedLine {
            path: edges_path.to_path_buf(),
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        let src = &row[src_col];
        let dst = &row[dst_col];
        let kind = kind_col.map(|c| LinkKind::parse(&row[c])).unwrap_or(LinkKind::Other);
        match (id_map.get(src), id_map.get(dst)) {
            (Some(&s), Some(&d)) if s != d => edge_list.push(EdgeRecord { src: s, dst: d, kind }),
            (Some(_), Some(_)) => {
                warnings.push(format!("{}:{line}: self-loop on {src:?} dropped", edges_path.display()))
            }
            _ => warnings.push(format!(
                "{}:{line}: edge {src:?} -> {dst:?} references an unknown user, dropped",
                edges_path.display()
            )),
        }
    }

    for w in &warnings {
        warn!("{w}");
    }
    let group_index = build_group_index(&records);
    Ok(DatasetBundle {
        users: records,
        edges: edge_list,
        group_index,
        external_ids: id_map.into_keys().collect(),
        warnings,
    })
}

fn parse_user(
    user_id: usize,
    obj: &serde_json::Map<String, Value>,
    warn: &mut dyn FnMut(String),
) -> std::result::Result<UserRecord, String> {
    let mut attributes = IndexMap::new();
    let mut username = String::new();
    let mut follower_count = 0u64;
    let mut group_names: Vec<String> = Vec::new();

    for (field, display) in KNOWN_FIELDS {
        let value = obj.get(field).unwrap_or(&Value::Null);
        let attr = match field {
            "followers" => match value {
                Value::Null => AttrValue::Unknown,
                Value::Number(n) => {
                    let x = n.as_f64().unwrap_or(f64::NAN);
                    if !(x >= 0.0 && x.is_finite()) {
                        return Err(format!("`followers` must be a nonnegative count, found {n}"));
                    }
                    follower_count = x as u64;
                    AttrValue::Number(x.floor())
                }
                Value::String(s) if s.trim().is_empty() => AttrValue::Unknown,
                Value::String(s) => match s.trim().parse::<u64>() {
                    Ok(c) => {
                        follower_count = c;
                        AttrValue::Number(c as f64)
                    }
                    Err(_) => return Err(format!("`followers` is not a count: {s:?}")),
                },
                other => return Err(format!("`followers` has unexpected type: {other}")),
            },
            "groups" => {
                match value {
                    Value::Null => {}
                    Value::Array(items) => {
                        for item in items {
                            match item {
                                Value::String(s) if !s.trim().is_empty() => {
                                    group_names.push(s.trim().to_string())
                                }
                                Value::String(_) => {}
                                other => return Err(format!("group name is not a string: {other}")),
                            }
                        }
                    }
                    Value::String(s) => group_names.extend(
                        s.split(',')
                            .map(str::trim)
                            .filter(|g| !g.is_empty())
                            .map(str::to_string),
                    ),
                    other => return Err(format!("`groups` has unexpected type: {other}")),
                }
                let mut seen = BTreeSet::new();
                group_names.retain(|g| seen.insert(g.clone()));
                if group_names.is_empty() {
                    AttrValue::Unknown
                } else {
                    AttrValue::Text(group_names.join(", "))
                }
            }
            _ => {
                let v = scalar_attr(value);
                if field == "username" {
                    if let AttrValue::Text(s) = &v {
                        username = s.clone();
                    }
                }
                v
            }
        };
        attributes.insert(display.to_string(), attr);
    }

    for (key, value) in obj {
        let lower = key.to_ascii_lowercase();
        if key == "id" || key == "mbti" || key == "enneagram" {
            continue;
        }
        if KNOWN_FIELDS.iter().any(|(f, _)| *f == lower) {
            continue;
        }
        attributes.insert(key.clone(), scalar_attr(value));
    }

    let mbti = match obj.get("mbti") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) if s.trim().is_empty() => None,
        Some(Value::String(s)) => match parse_mbti(s) {
            Ok(code) => Some(code),
            Err(e) => {
                warn(format!("{e}; label ignored"));
                None
            }
        },
        Some(other) => {
            warn(format!("mbti field is not a string: {other}; label ignored"));
            None
        }
    };
    let enneagram = match obj.get("enneagram") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) if s.trim().is_empty() => None,
        Some(v) => {
            let raw = match v {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            match parse_enneagram(&raw) {
                Ok(e) => Some(e),
                Err(e) => {
                    warn(format!("{e}; label ignored"));
                    None
                }
            }
        }
    };

    Ok(UserRecord {
        user_id,
        username,
        attributes,
        follower_count,
        group_names,
        mbti,
        enneagram,
    })
}

fn scalar_attr(value: &Value) -> AttrValue {
    match value {
        Value::Null => AttrValue::Unknown,
        Value::String(s) if s.trim().is_empty() => AttrValue::Unknown,
        Value::String(s) => AttrValue::Text(s.trim().to_string()),
        Value::Number(n) => n.as_f64().map(AttrValue::Number).unwrap_or(AttrValue::Unknown),
        Value::Bool(b) => AttrValue::Text(b.to_string()),
        Value::Array(items) => {
            let parts: Vec<String> = items
                .iter()
                .map(|i| match i {
                    Value::String(s) => s.clone(),
                    other => other.to_string(),
                })
                .collect();
            if parts.is_empty() {
                AttrValue::Unknown
            } else {
                AttrValue::Text(parts.join(", "))
            }
        }
        Value::Object(_) => AttrValue::Text(value.to_string()),
    }
}

/// Copy of the bundle with every personality label removed, including label-named attributes.
pub fn strip_labels(bundle: &DatasetBundle) -> DatasetBundle {
    let mut out = bundle.clone();
    for u in &mut out.users {
        u.mbti = None;
        u.enneagram = None;
        u.attributes.retain(|k, _| !is_label_key(k));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelCoverage {
    pub mbti: f64,
    pub enneagram: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub num_users: usize,
    pub num_edges: usize,
    pub num_groups: usize,
    /// Count of missing cells per attribute.
    pub missing_by_attribute: IndexMap<String, usize>,
    pub label_coverage: LabelCoverage,
    /// Users in no group and with no interaction edge.
    pub isolated_nodes: Vec<usize>,
    pub empty_groups: Vec<String>,
    pub warnings: Vec<String>,
}

pub fn validate(bundle: &DatasetBundle) -> ValidationReport {
    let n = bundle.users.len();
    let mut missing: IndexMap<String, usize> = IndexMap::new();
    for u in &bundle.users {
        for (k, v) in &u.attributes {
            let slot = missing.entry(k.clone()).or_insert(0);
            if v.is_unknown() {
                *slot += 1;
            }
        }
    }
    let ratio = |count: usize| if n == 0 { 0.0 } else { count as f64 / n as f64 };
    let label_coverage = LabelCoverage {
        mbti: ratio(bundle.users.iter().filter(|u| u.mbti.is_some()).count()),
        enneagram: ratio(bundle.users.iter().filter(|u| u.enneagram.is_some()).count()),
    };
    let mut touched = vec![false; n];
    for e in &bundle.edges {
        touched[e.src] = true;
        touched[e.dst] = true;
    }
    for members in bundle.group_index.values() {
        for &m in members {
            if m < n {
                touched[m] = true;
            }
        }
    }
    let isolated_nodes = (0..n).filter(|&i| !touched[i]).collect();
    let empty_groups = bundle
        .group_index
        .iter()
        .filter(|(_, m)| m.is_empty())
        .map(|(g, _)| g.clone())
        .collect();
    ValidationReport {
        num_users: n,
        num_edges: bundle.edges.len(),
        num_groups: bundle.group_index.len(),
        missing_by_attribute: missing,
        label_coverage,
        isolated_nodes,
        empty_groups,
        warnings: bundle.warnings.clone(),
    }
}

/// Default file names inside a dataset directory.
pub fn dataset_paths(dir: &Path) -> (PathBuf, PathBuf) {
    (dir.join("users.jsonl"), dir.join("edges.csv"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(users: &str, edges: &str) -> Result<DatasetBundle> {
        load_dataset_from(
            users.as_bytes(),
            Path::new("users.jsonl"),
            edges.as_bytes(),
            Path::new("edges.csv"),
        )
    }

    const USERS: &str = r#"{"id": "a", "username": "alice", "gender": "Female", "groups": ["book", "walk"], "mbti": "INFP", "followers": 12}
{"id": "b", "username": "bob", "gender": "Male", "groups": ["book"], "enneagram": "4w5"}
{"id": 7, "username": "carol", "MBTI": "ESTJ"}
"#;

    #[test]
    fn fixture_roundtrip() {
        let b = load(USERS, "src,dst,kind\na,b,follow\nb,7,quote\n").unwrap();
        assert_eq!(b.num_users(), 3);
        assert_eq!(b.edges.len(), 2);
        assert_eq!(b.external_ids, vec!["a", "b", "7"]);
        assert_eq!(b.edges[1], EdgeRecord { src: 1, dst: 2, kind: LinkKind::Quote });
        assert_eq!(b.group_index["book"], vec![0, 1]);
        assert_eq!(b.users[0].follower_count, 12);
        assert_eq!(b.users[0].mbti.unwrap().to_string(), "INFP");
        assert_eq!(b.users[1].enneagram.unwrap().core(), 4);
        assert_eq!(b.users[2].attributes["Gender"], AttrValue::Unknown);
        assert_eq!(b.users[2].attributes["MBTI"], AttrValue::Text("ESTJ".into()));
        assert!(b.users[2].mbti.is_none());
    }

    #[test]
    fn dangling_edge_dropped_with_warning() {
        let b = load(USERS, "src,dst,kind\na,b,follow\na,zzz,mention\n").unwrap();
        assert_eq!(b.edges.len(), 1);
        assert_eq!(b.warnings.len(), 1);
        assert!(b.warnings[0].contains("zzz"));
    }

    #[test]
    fn unknown_edge_kind_is_other() {
        let b = load(USERS, "src,dst,kind\na,b,poke\n").unwrap();
        assert_eq!(b.edges[0].kind, LinkKind::Other);
    }

    #[test]
    fn duplicate_user_is_fatal() {
        let users = "{\"id\": 1}\n{\"id\": \"1\"}\n";
        assert!(matches!(load(users, "src,dst,kind\n"), Err(Error::DuplicateUser(_))));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let users = "{\"id\": 1}\n{not json\n";
        match load(users, "src,dst,kind\n") {
            Err(Error::MalformedLine { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let users = "{\"id\": 1, \"followers\": -3}\n";
        assert!(matches!(load(users, "src,dst,kind\n"), Err(Error::MalformedLine { line: 1, .. })));
    }

    #[test]
    fn loading_is_deterministic() {
        let a = load(USERS, "src,dst,kind\na,b,follow\n").unwrap();
        let b = load(USERS, "src,dst,kind\na,b,follow\n").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn strip_removes_labels_and_label_keys() {
        let b = load(USERS, "src,dst,kind\n").unwrap();
        let s = strip_labels(&b);
        assert!(s.users.iter().all(|u| u.mbti.is_none() && u.enneagram.is_none()));
        assert!(!s.users[2].attributes.contains_key("MBTI"));
        // original untouched
        assert!(b.users[0].mbti.is_some());
        assert!(b.users[2].attributes.contains_key("MBTI"));
        // idempotent
        assert_eq!(strip_labels(&s), s);
    }

    #[test]
    fn validation_counts() {
        let mut users = String::new();
        for i in 0..10 {
            let mbti = if i < 2 { ",\"mbti\":\"INTJ\"" } else { "" };
            let groups = if i == 9 { "" } else { ",\"groups\":[\"g\"]" };
            users.push_str(&format!("{{\"id\":{i}{mbti}{groups}}}\n"));
        }
        let mut b = load(&users, "src,dst,kind\n").unwrap();
        b.group_index.insert("ghost".into(), vec![]);
        let r = validate(&b);
        assert!((r.label_coverage.mbti - 0.2).abs() < 1e-12);
        assert_eq!(r.label_coverage.enneagram, 0.0);
        assert_eq!(r.isolated_nodes, vec![9]);
        assert_eq!(r.empty_groups, vec!["ghost".to_string()]);
        assert_eq!(r.missing_by_attribute["Gender"], 10);
        assert_eq!(r.missing_by_attribute["Groups"], 1);
    }
}
