//! Dataset statistics: label distributions, cross-tabulations and power-law fits.

mod powerlaw;
mod tables;

use std::io::Write;

use serde::{Deserialize, Serialize};

pub use powerlaw::{frequency_table, powerlaw_fit, sample_discrete_power_law, PowerLawFit, MIN_TAIL};
pub use tables::{crosstab, distribution, Axis, Crosstab, Distribution, DistributionRow};

use crate::domain::Scheme;
use crate::error::{Error, Result};
use crate::ingest::DatasetBundle;

/// Pairs tabulated by [`dataset_stats`].
pub const DEFAULT_CROSSTABS: [(&str, &str); 4] = [
    ("enneagram", "mbti"),
    ("mbti", "gender"),
    ("mbti2", "followers-quartile"),
    ("mbti3", "followers-quartile"),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub num_users: usize,
    pub mbti: Option<Distribution>,
    pub enneagram: Option<Distribution>,
    pub crosstabs: Vec<Crosstab>,
    pub followers: Option<PowerLawFit>,
    pub group_sizes: Option<PowerLawFit>,
    /// Why a section above is absent.
    pub notes: Vec<String>,
}

/// Everything the `stats` command reports. Sections that cannot be computed are
/// left empty and explained in `notes`.
pub fn dataset_stats(bundle: &DatasetBundle) -> StatsReport {
    let mut notes = Vec::new();
    let mut note = |what: &str, e: Error| notes.push(format!("{what}: {e}"));
    let users = &bundle.users;

    let mbti = distribution(users, Scheme::Mbti16).map_err(|e| note("mbti distribution", e)).ok();
    let enneagram = distribution(users, Scheme::Enneagram9)
        .map_err(|e| note("enneagram distribution", e))
        .ok();

    let mut crosstabs = Vec::new();
    for (a, b) in DEFAULT_CROSSTABS {
        let table = Axis::parse(a, users)
            .and_then(|a| Axis::parse(b, users).map(|b| (a, b)))
            .and_then(|(a, b)| crosstab(users, &a, &b));
        match table {
            Ok(t) if t.total() > 0 => crosstabs.push(t),
            Ok(_) => note(&format!("crosstab {a} x {b}"), Error::Precondition("no co-observed users".into())),
            Err(e) => note(&format!("crosstab {a} x {b}"), e),
        }
    }

    let followers = powerlaw_fit(&follower_counts(bundle), None)
        .map_err(|e| note("follower power law", e))
        .ok();
    let group_sizes = powerlaw_fit(&group_sizes(bundle), None)
        .map_err(|e| note("group-size power law", e))
        .ok();

    StatsReport {
        num_users: bundle.num_users(),
        mbti,
        enneagram,
        crosstabs,
        followers,
        group_sizes,
        notes,
    }
}

pub fn follower_counts(bundle: &DatasetBundle) -> Vec<u64> {
    bundle.users.iter().map(|u| u.follower_count).collect()
}

pub fn group_sizes(bundle: &DatasetBundle) -> Vec<u64> {
    bundle.group_index.values().map(|m| m.len() as u64).collect()
}

/// `x,count,ccdf` rows for a log-log plot; `ccdf` is the share of values `>= x`.
pub fn write_plot_csv<W: Write>(values: &[u64], w: W) -> Result<()> {
    let table = frequency_table(values);
    let total: usize = table.iter().map(|(_, c)| c).sum();
    let mut out = csv::Writer::from_writer(w);
    let err = |e: csv::Error| Error::Format(format!("writing plot data: {e}"));
    out.write_record(["x", "count", "ccdf"]).map_err(err)?;
    let mut remaining = total;
    for (x, c) in table {
        out.write_record([x.to_string(), c.to_string(), (remaining as f64 / total as f64).to_string()])
            .map_err(err)?;
        remaining -= c;
    }
    out.flush().map_err(|e| Error::Format(format!("writing plot data: {e}")))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plot_csv_shape() {
        let mut buf = Vec::new();
        write_plot_csv(&[1, 1, 2, 4, 0], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "x,count,ccdf\n1,2,1\n2,1,0.5\n4,1,0.25\n");
    }

    #[test]
    fn empty_dataset_reports_notes() {
        let b = DatasetBundle::from_parts(vec![], vec![]).unwrap();
        let r = dataset_stats(&b);
        assert!(r.mbti.is_none() && r.followers.is_none());
        assert!(r.notes.len() >= 3);
    }
}
