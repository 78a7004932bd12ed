//! Seeded synthetic datasets whose forum groups carry the class signal.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::ingest::{load_dataset_from, DatasetBundle};
use crate::stats::sample_discrete_power_law;

/// Groups of each class, indexed `[class][slot]`.
pub const GROUP_NAMES: [[&str; 5]; 4] = [
    ["Poetry", "Journaling", "Fantasy", "Tarot", "Watercolor"],
    ["Chess", "Physics", "Strategy", "Programming", "Astronomy"],
    ["Finance", "Fitness", "Management", "Law", "Logistics"],
    ["Travel", "Improv", "Festivals", "Dancing", "Podcasts"],
];
pub const CLASS_MBTI: [&str; 4] = ["INFP", "INTJ", "ESTJ", "ENFP"];
pub const CLASS_ENNEAGRAM: [u8; 4] = [4, 5, 1, 7];

const GENDERS: [&str; 3] = ["Female", "Male", "Non-binary"];
const LOCATIONS: [&str; 6] = ["Berlin", "Toronto", "Lagos", "Osaka", "Lima", "Denver"];
const OCCUPATIONS: [&str; 6] = ["Student", "Nurse", "Engineer", "Teacher", "Designer", "Clerk"];
const RELATIONSHIPS: [&str; 3] = ["Single", "Married", "Dating"];
const ABOUT: [&str; 5] = [
    "Coffee first, questions later",
    "Here to meet people",
    "Still figuring things out",
    "Weekend gardener",
    "Ask me anything",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantedConfig {
    pub num_users: usize,
    pub memberships_per_user: usize,
    /// Chance that each membership is one of the user's own class groups.
    pub purity: f64,
    pub edges_per_user: usize,
    /// Chance that an interaction edge stays within the class.
    pub homophily: f64,
    /// Chance that an enneagram label follows the class rather than being random.
    pub enneagram_agreement: f64,
    pub follower_alpha: f64,
    /// Chance that an optional attribute is missing.
    pub missing_rate: f64,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig {
            num_users: 200,
            memberships_per_user: 3,
            purity: 0.9,
            edges_per_user: 4,
            homophily: 0.8,
            enneagram_agreement: 0.7,
            follower_alpha: 2.5,
            missing_rate: 0.15,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlantedDataset {
    /// Class of each user, `0..4`.
    pub classes: Vec<usize>,
    pub users_jsonl: String,
    pub edges_csv: String,
}

impl PlantedDataset {
    pub fn bundle(&self) -> Result<DatasetBundle> {
        load_dataset_from(
            self.users_jsonl.as_bytes(),
            std::path::Path::new("<planted users>"),
            self.edges_csv.as_bytes(),
            std::path::Path::new("<planted edges>"),
        )
    }

    pub fn write_to(&self, dir: &std::path::Path) -> Result<()> {
        let (users, edges) = crate::ingest::dataset_paths(dir);
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        std::fs::write(&users, &self.users_jsonl).map_err(|e| Error::io(&users, e))?;
        std::fs::write(&edges, &self.edges_csv).map_err(|e| Error::io(&edges, e))?;
        Ok(())
    }
}

pub fn planted_dataset(cfg: &PlantedConfig) -> Result<PlantedDataset> {
    let classes_n = GROUP_NAMES.len();
    let per_class = GROUP_NAMES[0].len();
    if cfg.num_users < classes_n || cfg.memberships_per_user == 0 || cfg.memberships_per_user > per_class {
        return Err(Error::Precondition(format!("unusable planted configuration {cfg:?}")));
    }
    for p in [cfg.purity, cfg.homophily, cfg.enneagram_agreement, cfg.missing_rate] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Precondition(format!("probability {p} outside [0, 1]")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.num_users;
    let mut classes: Vec<usize> = (0..n).map(|i| i % classes_n).collect();
    classes.shuffle(&mut rng);

    let mut users_jsonl = String::new();
    for (i, &c) in classes.iter().enumerate() {
        let mut groups: Vec<&str> = Vec::new();
        while groups.len() < cfg.memberships_per_user {
            let class = if rng.random::<f64>() < cfg.purity {
                c
            } else {
                (c + rng.random_range(1..classes_n)) % classes_n
            };
            let g = GROUP_NAMES[class][rng.random_range(0..per_class)];
            if !groups.contains(&g) {
                groups.push(g);
            }
        }
        let mut maybe = |options: &[&'static str]| -> Option<&'static str> {
            let pick = *options.choose(&mut rng).expect("non-empty");
            (rng.random::<f64>() >= cfg.missing_rate).then_some(pick)
        };
        let gender = maybe(&GENDERS);
        let location = maybe(&LOCATIONS);
        let occupation = maybe(&OCCUPATIONS);
        let relationship = maybe(&RELATIONSHIPS);
        let about = maybe(&ABOUT);
        let enneagram = if rng.random::<f64>() < cfg.enneagram_agreement {
            CLASS_ENNEAGRAM[c]
        } else {
            rng.random_range(1..=9)
        };
        let followers = sample_discrete_power_law(&mut rng, cfg.follower_alpha, 1) - 1;
        let record = json!({
            "id": format!("u{i:04}"),
            "username": format!("user{i:03}"),
            "gender": gender,
            "location": location,
            "occupation": occupation,
            "relationship": relationship,
            "about": about,
            "followers": followers,
            "groups": groups,
            "mbti": CLASS_MBTI[c],
            "enneagram": format!("{enneagram}"),
        });
        users_jsonl.push_str(&record.to_string());
        users_jsonl.push('\n');
    }

    let by_class: Vec<Vec<usize>> = (0..classes_n)
        .map(|c| (0..n).filter(|&i| classes[i] == c).collect())
        .collect();
    let mut edges = BTreeSet::new();
    let mut edges_csv = String::from("src,dst,kind\n");
    for (src, &c) in classes.iter().enumerate() {
        let mut made = 0;
        let mut attempts = 0;
        while made < cfg.edges_per_user && attempts < 100 * cfg.edges_per_user {
            attempts += 1;
            let dst = if rng.random::<f64>() < cfg.homophily {
                *by_class[c].choose(&mut rng).expect("non-empty class")
            } else {
                rng.random_range(0..n)
            };
            if dst == src || !edges.insert((src, dst)) {
                continue;
            }
            let kind = match rng.random_range(0..10) {
                0..=5 => "follow",
                6..=7 => "quote",
                _ => "mention",
            };
            writeln!(edges_csv, "u{src:04},u{dst:04},{kind}").expect("string write");
            made += 1;
        }
    }

    Ok(PlantedDataset { classes, users_jsonl, edges_csv })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Scheme;

    #[test]
    fn deterministic_and_balanced() {
        let a = planted_dataset(&PlantedConfig::default()).unwrap();
        let b = planted_dataset(&PlantedConfig::default()).unwrap();
        assert_eq!(a.users_jsonl, b.users_jsonl);
        assert_eq!(a.edges_csv, b.edges_csv);
        for c in 0..4 {
            assert_eq!(a.classes.iter().filter(|&&x| x == c).count(), 50);
        }
    }

    #[test]
    fn loads_with_planted_labels_and_groups() {
        let d = planted_dataset(&PlantedConfig::default()).unwrap();
        let bundle = d.bundle().unwrap();
        assert_eq!(bundle.num_users(), 200);
        assert_eq!(bundle.group_index.len(), 20);
        assert!(bundle.warnings.is_empty(), "{:?}", bundle.warnings);
        let labels = bundle.labels(Scheme::Mbti16);
        for (i, &c) in d.classes.iter().enumerate() {
            assert_eq!(Scheme::Mbti16.class_name(labels[i].unwrap()), CLASS_MBTI[c]);
        }
    }

    #[test]
    fn group_purity_is_near_target() {
        let d = planted_dataset(&PlantedConfig::default()).unwrap();
        let bundle = d.bundle().unwrap();
        let mut own = 0;
        let mut total = 0;
        for (name, members) in &bundle.group_index {
            let class = GROUP_NAMES.iter().position(|g| g.contains(&name.as_str())).unwrap();
            own += members.iter().filter(|&&m| d.classes[m] == class).count();
            total += members.len();
        }
        let purity = own as f64 / total as f64;
        assert!((0.85..0.95).contains(&purity), "{purity}");
    }
}
