//! Repetition protocol and the experiment grids.

use std::borrow::Cow;
use std::io::Write;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{metrics, Metrics};
use super::split::{split, DEFAULT_RATIOS};
use crate::domain::Scheme;
use crate::enhance::raw_feature_matrix;
use crate::envgen::{assemble, HyperedgeSpec};
use crate::error::{Error, Result};
use crate::features::Features;
use crate::hgnn::{train, PropagationOperator, TrainConfig, TrainInput};
use crate::hypergraph::HyperedgeKind;
use crate::ingest::DatasetBundle;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSource {
    #[default]
    Enhanced,
    Raw,
}

impl FeatureSource {
    pub fn name(self) -> &'static str {
        match self {
            FeatureSource::Enhanced => "enhanced",
            FeatureSource::Raw => "raw",
        }
    }
}

impl std::str::FromStr for FeatureSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "enhanced" => Ok(FeatureSource::Enhanced),
            "raw" => Ok(FeatureSource::Raw),
            other => Err(Error::Format(format!("unknown feature source {other:?}"))),
        }
    }
}

/// Dataset plus the embedded narratives, when they exist.
#[derive(Debug, Clone, Copy)]
pub struct ExperimentData<'a> {
    pub bundle: &'a DatasetBundle,
    pub enhanced: Option<&'a Features>,
}

impl<'a> ExperimentData<'a> {
    pub fn features(&self, source: FeatureSource) -> Result<Cow<'a, Features>> {
        match source {
            FeatureSource::Enhanced => self.enhanced.map(Cow::Borrowed).ok_or_else(|| {
                Error::Precondition("no enhanced feature store; run enhance and embed first".into())
            }),
            FeatureSource::Raw => Ok(Cow::Owned(raw_feature_matrix(self.bundle)?.features)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub source: FeatureSource,
    pub hyperedges: HyperedgeSpec,
    pub scheme: Scheme,
    pub train: TrainConfig,
    /// Repetition `r` uses seed `train.seed + r` for both the split and the initialisation.
    pub n_reps: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            source: FeatureSource::Enhanced,
            hyperedges: HyperedgeSpec::default(),
            scheme: Scheme::Mbti16,
            train: TrainConfig::default(),
            n_reps: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Repetition {
    pub seed: u64,
    pub train_size: usize,
    pub val_size: usize,
    pub test_size: usize,
    pub best_epoch: Option<usize>,
    pub epochs_run: usize,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub accuracy: f64,
    /// Over the repetitions where AUC is defined.
    pub auc: Option<f64>,
    pub macro_f1: f64,
    pub micro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub hyperedges: String,
    pub feature_source: FeatureSource,
    pub scheme: Scheme,
    pub train_fraction: f64,
    pub repetitions: Vec<Repetition>,
    pub mean: MetricSummary,
    /// Sample standard deviation; zero for a single repetition.
    pub std: MetricSummary,
}

impl EvalReport {
    /// Aggregates repetitions that were run elsewhere.
    pub fn from_repetitions(
        hyperedges: String,
        feature_source: FeatureSource,
        scheme: Scheme,
        train_fraction: f64,
        repetitions: Vec<Repetition>,
    ) -> Self {
        let (mean, std) = summarize(&repetitions);
        EvalReport { hyperedges, feature_source, scheme, train_fraction, repetitions, mean, std }
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn summarize(reps: &[Repetition]) -> (MetricSummary, MetricSummary) {
    let col = |f: fn(&Metrics) -> f64| mean_std(&reps.iter().map(|r| f(&r.metrics)).collect::<Vec<_>>());
    let (acc_m, acc_s) = col(|m| m.accuracy);
    let (mf_m, mf_s) = col(|m| m.macro_f1);
    let (mi_m, mi_s) = col(|m| m.micro_f1);
    let aucs: Vec<f64> = reps.iter().filter_map(|r| r.metrics.auc).collect();
    let (auc_m, auc_s) = if aucs.is_empty() {
        (None, None)
    } else {
        let (m, s) = mean_std(&aucs);
        (Some(m), Some(s))
    };
    (
        MetricSummary { accuracy: acc_m, auc: auc_m, macro_f1: mf_m, micro_f1: mi_m },
        MetricSummary { accuracy: acc_s, auc: auc_s, macro_f1: mf_s, micro_f1: mi_s },
    )
}

/// Seeded subset of `ids` of size `floor(fraction * len)`, kept in input order.
pub fn subsample(ids: &[usize], fraction: f64, seed: u64) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Precondition(format!("training fraction must lie in (0, 1], got {fraction}")));
    }
    let keep = (fraction * ids.len() as f64 + 1e-9).floor() as usize;
    if keep == 0 {
        return Err(Error::Precondition(format!(
            "fraction {fraction} of {} training nodes leaves none",
            ids.len()
        )));
    }
    if keep == ids.len() {
        return Ok(ids.to_vec());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut picked = sample(&mut rng, ids.len(), keep).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| ids[i]).collect())
}

struct Prepared<S> {
    operator: PropagationOperator<S>,
    features: Features<S>,
    labels: Vec<Option<usize>>,
    labeled: Vec<usize>,
}

fn prepare<S: Scalar>(data: &ExperimentData<'_>, cfg: &ExperimentConfig) -> Result<Prepared<S>> {
    let features = data.features(cfg.source)?.cast::<S>();
    if features.rows() != data.bundle.num_users() {
        return Err(Error::Shape(format!(
            "{} feature rows for {} users",
            features.rows(),
            data.bundle.num_users()
        )));
    }
    let sem = cfg.hyperedges.has(HyperedgeKind::Sem).then_some(&features);
    let graph = assemble(&cfg.hyperedges, data.bundle, sem)?;
    let operator = PropagationOperator::new(&graph);
    let labels = data.bundle.labels(cfg.scheme);
    let labeled = (0..labels.len()).filter(|&i| labels[i].is_some()).collect();
    Ok(Prepared { operator, features, labels, labeled })
}

fn run_prepared<S: Scalar>(
    prep: &Prepared<S>,
    cfg: &ExperimentConfig,
    fraction: f64,
) -> Result<EvalReport> {
    if cfg.n_reps == 0 {
        return Err(Error::Precondition("n_reps must be at least 1".into()));
    }
    let num_classes = cfg.scheme.num_classes();
    let run_one = |rep: usize| -> Result<Repetition> {
        let seed = cfg.train.seed.wrapping_add(rep as u64);
        let parts = split(&prep.labeled, DEFAULT_RATIOS, seed)?;
        let train_ids = subsample(&parts.train, fraction, seed)?;
        let config = TrainConfig { seed, ..cfg.train.clone() };
        let outcome = train(
            TrainInput {
                operator: &prep.operator,
                features: prep.features.view(),
                labels: &prep.labels,
                num_classes,
                train_ids: &train_ids,
                val_ids: &parts.val,
            },
            &config,
        )?;
        let probs = outcome.model.predict(&prep.operator, prep.features.view())?;
        let test_probs = probs.select(ndarray::Axis(0), &parts.test);
        let test_labels: Vec<usize> = parts.test.iter().map(|&i| prep.labels[i].expect("labeled")).collect();
        Ok(Repetition {
            seed,
            train_size: train_ids.len(),
            val_size: parts.val.len(),
            test_size: parts.test.len(),
            best_epoch: outcome.best_epoch,
            epochs_run: outcome.history.len(),
            metrics: metrics(test_probs.view(), &test_labels)?,
        })
    };
    let results: Vec<Result<Repetition>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..cfg.n_reps).map(|r| scope.spawn(move || run_one(r))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("repetition thread panicked"))
            .collect()
    });
    let repetitions = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_repetitions(
        cfg.hyperedges.label(),
        cfg.source,
        cfg.scheme,
        fraction,
        repetitions,
    ))
}

/// Fresh split, initialisation, training and test metrics for every repetition.
pub fn run_experiment<S: Scalar>(data: &ExperimentData<'_>, cfg: &ExperimentConfig) -> Result<EvalReport> {
    let prep = prepare::<S>(data, cfg)?;
    run_prepared(&prep, cfg, 1.0)
}

/// Every non-empty subset of hyperedge families, in a fixed order.
pub fn hyperedge_subsets() -> Vec<Vec<HyperedgeKind>> {
    use HyperedgeKind::*;
    vec![
        vec![Top],
        vec![Sem],
        vec![For],
        vec![Top, Sem],
        vec![Top, For],
        vec![Sem, For],
        vec![Top, Sem, For],
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentTable {
    pub rows: Vec<EvalReport>,
}

pub fn ablate_hyperedges<S: Scalar>(data: &ExperimentData<'_>, cfg: &ExperimentConfig) -> Result<ExperimentTable> {
    let rows = hyperedge_subsets()
        .into_iter()
        .map(|kinds| {
            let cell = ExperimentConfig {
                hyperedges: HyperedgeSpec { kinds, ..cfg.hyperedges.clone() },
                ..cfg.clone()
            };
            run_experiment::<S>(data, &cell)
        })
        .collect::<Result<_>>()?;
    Ok(ExperimentTable { rows })
}

pub const DEFAULT_FRACTIONS: [f64; 5] = [0.1, 0.25, 0.5, 0.75, 1.0];

/// Subsamples each repetition's training split; validation and test are untouched.
pub fn label_ratio_sweep<S: Scalar>(
    data: &ExperimentData<'_>,
    fractions: &[f64],
    cfg: &ExperimentConfig,
) -> Result<ExperimentTable> {
    if let Some(f) = fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
        return Err(Error::Precondition(format!("training fraction must lie in (0, 1], got {f}")));
    }
    let prep = prepare::<S>(data, cfg)?;
    let rows = fractions
        .iter()
        .map(|&f| run_prepared(&prep, cfg, f))
        .collect::<Result<_>>()?;
    Ok(ExperimentTable { rows })
}

const CSV_HEADER: [&str; 13] = [
    "hyperedges",
    "feature_source",
    "scheme",
    "train_fraction",
    "n_reps",
    "accuracy_mean",
    "accuracy_std",
    "auc_mean",
    "auc_std",
    "macro_f1_mean",
    "macro_f1_std",
    "micro_f1_mean",
    "micro_f1_std",
];

impl ExperimentTable {
    /// One summary row per report; undefined AUC is left empty.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let csv_err = |e: csv::Error| Error::Format(format!("writing CSV: {e}"));
        out.write_record(CSV_HEADER).map_err(csv_err)?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            out.write_record([
                r.hyperedges.clone(),
                r.feature_source.name().to_string(),
                r.scheme.name().to_string(),
                r.train_fraction.to_string(),
                r.repetitions.len().to_string(),
                r.mean.accuracy.to_string(),
                r.std.accuracy.to_string(),
                opt(r.mean.auc),
                opt(r.std.auc),
                r.mean.macro_f1.to_string(),
                r.std.macro_f1.to_string(),
                r.mean.micro_f1.to_string(),
                r.std.micro_f1.to_string(),
            ])
            .map_err(csv_err)?;
        }
        out.flush().map_err(|e| Error::Format(format!("writing CSV: {e}")))?;
        Ok(())
    }
}
