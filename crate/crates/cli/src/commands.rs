//! One function per subcommand. Each reads its inputs from the output
//! directory, writes its artifacts there and returns a one-line summary.

use std::io::Write;

use anyhow::{bail, Context, Result};
use hypersoc_core::enhance::{
    build_prompt, embed, enhance_profiles, raw_feature_matrix, read_profiles, write_profiles,
    ChatCompletionClient, EnhancedProfile, LlmClient, MockClient, ProfileCache,
};
use hypersoc_core::envgen::assemble;
use hypersoc_core::eval::{
    ablate_hyperedges, label_ratio_sweep, metrics, run_experiment, split, EvalReport,
    ExperimentConfig, ExperimentData, ExperimentTable, FeatureSource, Repetition,
    SplitAssignment, DEFAULT_RATIOS,
};
use hypersoc_core::hgnn::checkpoint::{read_checkpoint, write_checkpoint};
use hypersoc_core::hgnn::gradcheck::ModeSetting;
use hypersoc_core::hgnn::{grad_check, train, EpochRecord, GradCheckConfig, GradCheckReport, HgnnModel, TrainInput};
use hypersoc_core::hypergraph::{HyperedgeKind, WeightsSidecar};
use hypersoc_core::ingest::{load_dataset, strip_labels, validate, DatasetBundle};
use hypersoc_core::stats::{dataset_stats, follower_counts, group_sizes, write_plot_csv, StatsReport};
use hypersoc_core::{FeatureMatrix, Hypergraph, PropagationOperator};
use serde::{Deserialize, Serialize};

use crate::artifacts::{
    check_provenance, create, open, read_json, require, write_json, write_with_comment, Layout,
    Provenance, Stamped,
};
use crate::config::RunConfig;

/// Returned when the gradient check runs but exceeds its threshold.
#[derive(Debug, thiserror::Error)]
#[error("gradient check failed: max relative error {max:.3e} exceeds {threshold:.1e}")]
pub struct GradCheckFailed {
    pub max: f64,
    pub threshold: f64,
}

pub struct Ctx {
    pub cfg: RunConfig,
    pub layout: Layout,
}

impl Ctx {
    pub fn new(cfg: RunConfig) -> Self {
        let layout = Layout::new(&cfg.out);
        Ctx { cfg, layout }
    }

    fn provenance(&self, command: &str) -> Provenance {
        Provenance::new(command, &self.cfg)
    }

    fn bundle(&self) -> Result<DatasetBundle> {
        let d = &self.cfg.data;
        load_dataset(&d.users, &d.edges).with_context(|| {
            format!("loading dataset ({}, {})", d.users.display(), d.edges.display())
        })
    }

    fn features(&self, bundle: &DatasetBundle) -> Result<FeatureMatrix> {
        let features = match self.cfg.features {
            FeatureSource::Raw => raw_feature_matrix(bundle)?.features,
            FeatureSource::Enhanced => {
                let path = self.layout.embeddings();
                require(&path, "embed")?;
                if let Ok(meta) = read_json::<Stamped<serde_json::Value>>(&self.layout.embeddings_meta()) {
                    check_provenance(&path, &meta.provenance, &self.cfg);
                }
                FeatureMatrix::read_binary(open(&path)?)
                    .with_context(|| format!("reading {}", path.display()))?
            }
        };
        if features.rows() != bundle.num_users() {
            bail!(
                "feature matrix has {} rows but the dataset has {} users; run embed again",
                features.rows(),
                bundle.num_users()
            );
        }
        Ok(features)
    }

    fn graph(&self) -> Result<Hypergraph> {
        let edges = self.layout.hyperedges();
        require(&edges, "build")?;
        let sidecar: WeightsSidecar = read_json(&self.layout.hypergraph_weights())?;
        if let Some(p) = sidecar.provenance.clone().and_then(|v| serde_json::from_value(v).ok()) {
            check_provenance(&edges, &p, &self.cfg);
        }
        Hypergraph::read(open(&edges)?, &sidecar).with_context(|| format!("reading {}", edges.display()))
    }

    fn experiment_config(&self) -> ExperimentConfig {
        ExperimentConfig {
            source: self.cfg.features,
            hyperedges: self.cfg.hyperedges.clone(),
            scheme: self.cfg.scheme,
            train: self.cfg.train.clone(),
            n_reps: self.cfg.eval.n_reps,
        }
    }
}

pub fn ingest(ctx: &Ctx) -> Result<String> {
    let bundle = ctx.bundle()?;
    let report = validate(&bundle);
    for w in &report.warnings {
        log::warn!("{w}");
    }
    write_json(
        &ctx.layout.validation(),
        &Stamped { provenance: ctx.provenance("ingest"), body: &report },
    )?;
    Ok(format!(
        "ingest: {} users, {} edges, {} groups, {} warnings",
        report.num_users,
        report.num_edges,
        report.num_groups,
        report.warnings.len()
    ))
}

pub fn enhance(ctx: &Ctx) -> Result<String> {
    let bundle = strip_labels(&ctx.bundle()?);
    let prompts = bundle
        .users
        .iter()
        .map(build_prompt)
        .collect::<hypersoc_core::Result<Vec<_>>>()?;
    let client: Box<dyn LlmClient> = if ctx.cfg.offline {
        Box::new(MockClient::default())
    } else {
        Box::new(ChatCompletionClient::from_env(ctx.cfg.llm.clone()))
    };
    let cache = ProfileCache::new();
    let store = ctx.layout.profiles();
    if store.exists() {
        let n = cache.extend_from_store(open(&store)?)?;
        log::info!("warmed cache with {n} stored profiles");
    }
    let (profiles, stats) = enhance_profiles(client.as_ref(), &prompts, &cache, &ctx.cfg.enhance);
    let prov = ctx.provenance("enhance").to_value();
    let mut w = create(&store)?;
    write_profiles(&profiles, Some(&prov), &mut w)?;
    w.flush()?;
    Ok(format!(
        "enhance: {} profiles with {} ({} client calls, {} cache hits, {} fallbacks)",
        profiles.len(),
        client.model_id(),
        stats.client_calls,
        stats.cache_hits,
        stats.fallbacks
    ))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EmbeddingMeta {
    pub rows: usize,
    pub cols: usize,
    pub embedder: hypersoc_core::enhance::EmbedderSpec,
    pub zero_rows: Vec<usize>,
    pub fallback_users: Vec<usize>,
}

pub fn embed_cmd(ctx: &Ctx) -> Result<String> {
    let n = ctx.bundle()?.num_users();
    let store = ctx.layout.profiles();
    require(&store, "enhance")?;
    let mut by_user: Vec<Option<EnhancedProfile>> = vec![None; n];
    for p in read_profiles(open(&store)?)? {
        if p.user_id >= n {
            bail!("profile store mentions user {} but the dataset has {n}; run enhance again", p.user_id);
        }
        let slot = p.user_id;
        by_user[slot] = Some(p);
    }
    if let Some(missing) = by_user.iter().position(Option::is_none) {
        bail!("no enhanced profile for user {missing}; run enhance first");
    }
    let profiles: Vec<EnhancedProfile> = by_user.into_iter().flatten().collect();
    let texts: Vec<String> = profiles.iter().map(|p| p.narrative.clone()).collect();
    let spec = ctx.cfg.effective_embedder();
    let embedding = embed(&spec, &texts)?;
    let prov = ctx.provenance("embed");

    let mut w = create(&ctx.layout.embeddings())?;
    embedding.features.write_binary(&mut w)?;
    w.flush()?;
    let header = vec![prov.comment(), format!("embedder: {:?}, dim {}", spec.kind, spec.dim)];
    let mut w = create(&ctx.layout.embeddings_text())?;
    embedding.features.write_text(&mut w, &header)?;
    w.flush()?;
    let meta = EmbeddingMeta {
        rows: embedding.features.rows(),
        cols: embedding.features.cols(),
        embedder: spec,
        zero_rows: embedding.zero_rows.clone(),
        fallback_users: profiles.iter().filter(|p| p.fallback).map(|p| p.user_id).collect(),
    };
    write_json(&ctx.layout.embeddings_meta(), &Stamped { provenance: prov, body: &meta })?;
    Ok(format!(
        "embed: {} x {} matrix, {} zero rows",
        meta.rows,
        meta.cols,
        meta.zero_rows.len()
    ))
}

pub fn build(ctx: &Ctx) -> Result<String> {
    let bundle = ctx.bundle()?;
    let spec = &ctx.cfg.hyperedges;
    let features = if spec.has(HyperedgeKind::Sem) {
        Some(ctx.features(&bundle)?)
    } else {
        None
    };
    let graph = assemble(spec, &bundle, features.as_ref())?;
    let prov = ctx.provenance("build");
    let counts: Vec<String> = HyperedgeKind::ALL
        .iter()
        .map(|k| format!("{k}={}", graph.count_kind(*k)))
        .collect();
    let header = vec![
        prov.comment(),
        format!("nodes {}, hyperedges {} ({})", graph.num_nodes(), graph.num_edges(), counts.join(", ")),
        "edge_id,kind,member...".to_string(),
    ];
    let mut w = create(&ctx.layout.hyperedges())?;
    graph.write_edges(&mut w, &header)?;
    w.flush()?;
    let mut sidecar = graph.weights_sidecar();
    sidecar.provenance = Some(prov.to_value());
    write_json(&ctx.layout.hypergraph_weights(), &sidecar)?;
    let isolated = PropagationOperator::new(&graph).isolated_nodes().len();
    Ok(format!(
        "build: {} ({}), {} hyperedges, {} isolated nodes",
        spec.label(),
        counts.join(", "),
        graph.num_edges(),
        isolated
    ))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct History {
    pub best_epoch: Option<usize>,
    pub train_size: usize,
    pub val_size: usize,
    pub test_size: usize,
    pub epochs: Vec<EpochRecord>,
}

fn labeled_ids(labels: &[Option<usize>]) -> Vec<usize> {
    (0..labels.len()).filter(|&i| labels[i].is_some()).collect()
}

pub fn train_cmd(ctx: &Ctx) -> Result<String> {
    let bundle = ctx.bundle()?;
    let graph = ctx.graph()?;
    if graph.num_nodes() != bundle.num_users() {
        bail!("hypergraph has {} nodes but the dataset has {} users; run build again", graph.num_nodes(), bundle.num_users());
    }
    let features = ctx.features(&bundle)?;
    let labels = bundle.labels(ctx.cfg.scheme);
    let parts = split(&labeled_ids(&labels), DEFAULT_RATIOS, ctx.cfg.seed)?;
    let op = PropagationOperator::new(&graph);
    let outcome = train(
        TrainInput {
            operator: &op,
            features: features.view(),
            labels: &labels,
            num_classes: ctx.cfg.scheme.num_classes(),
            train_ids: &parts.train,
            val_ids: &parts.val,
        },
        &ctx.cfg.train,
    )?;
    let prov = ctx.provenance("train");
    let mut w = create(&ctx.layout.checkpoint())?;
    write_checkpoint(&outcome.model, prov.to_value(), &mut w)?;
    w.flush()?;
    let history = History {
        best_epoch: outcome.best_epoch,
        train_size: parts.train.len(),
        val_size: parts.val.len(),
        test_size: parts.test.len(),
        epochs: outcome.history,
    };
    write_json(&ctx.layout.history(), &Stamped { provenance: prov.clone(), body: &history })?;
    write_json(&ctx.layout.split(), &Stamped { provenance: prov, body: &parts })?;
    let best = history.best_epoch.map(|e| history.epochs[e].val_accuracy).unwrap_or(0.0);
    Ok(format!(
        "train: {} epochs, best epoch {:?}, validation accuracy {best:.4}",
        history.epochs.len(),
        history.best_epoch
    ))
}

fn write_table(ctx: &Ctx, command: &str, table: &ExperimentTable, json: &std::path::Path, csv: &std::path::Path) -> Result<()> {
    let prov = ctx.provenance(command);
    write_json(json, &Stamped { provenance: prov.clone(), body: table })?;
    write_with_comment(csv, &prov, |w| Ok(table.write_csv(w)?))
}

pub fn eval_cmd(ctx: &Ctx) -> Result<String> {
    let ckpt = ctx.layout.checkpoint();
    require(&ckpt, "train")?;
    require(&ctx.layout.split(), "train")?;
    let (model, header) = read_checkpoint::<f64, _>(open(&ckpt)?)?;
    if let Ok(p) = serde_json::from_value::<Provenance>(header.provenance) {
        check_provenance(&ckpt, &p, &ctx.cfg);
    }
    let parts: Stamped<SplitAssignment> = read_json(&ctx.layout.split())?;
    let history: Stamped<History> = read_json(&ctx.layout.history())?;
    let bundle = ctx.bundle()?;
    let graph = ctx.graph()?;
    let features = ctx.features(&bundle)?;
    let labels = bundle.labels(ctx.cfg.scheme);
    let op = PropagationOperator::new(&graph);
    let probs = model.predict(&op, features.view())?;
    let test = &parts.body.test;
    let test_probs = probs.select(ndarray::Axis(0), test);
    let test_labels = test
        .iter()
        .map(|&i| labels[i].context("test node without a label; run train again"))
        .collect::<Result<Vec<_>>>()?;
    let first = Repetition {
        seed: ctx.cfg.seed,
        train_size: parts.body.train.len(),
        val_size: parts.body.val.len(),
        test_size: test.len(),
        best_epoch: history.body.best_epoch,
        epochs_run: history.body.epochs.len(),
        metrics: metrics(test_probs.view(), &test_labels)?,
    };
    let mut reps = vec![first];
    if ctx.cfg.eval.n_reps > 1 {
        let mut more = ctx.experiment_config();
        more.n_reps = ctx.cfg.eval.n_reps - 1;
        more.train.seed = ctx.cfg.seed + 1;
        let enhanced = (ctx.cfg.features == FeatureSource::Enhanced).then_some(&features);
        let data = ExperimentData { bundle: &bundle, enhanced };
        reps.extend(run_experiment::<f64>(&data, &more)?.repetitions);
    }
    let report = EvalReport::from_repetitions(
        ctx.cfg.hyperedges.label(),
        ctx.cfg.features,
        ctx.cfg.scheme,
        1.0,
        reps,
    );
    let table = ExperimentTable { rows: vec![report] };
    write_table(ctx, "eval", &table, &ctx.layout.report(), &ctx.layout.report_csv())?;
    let r = &table.rows[0];
    Ok(format!(
        "eval: accuracy {:.4} ± {:.4}, macro-F1 {:.4}, AUC {} over {} repetitions",
        r.mean.accuracy,
        r.std.accuracy,
        r.mean.macro_f1,
        r.mean.auc.map_or("n/a".to_string(), |a| format!("{a:.4}")),
        r.repetitions.len()
    ))
}

fn experiment_inputs(ctx: &Ctx) -> Result<(DatasetBundle, Option<FeatureMatrix>)> {
    let bundle = ctx.bundle()?;
    let enhanced = match ctx.cfg.features {
        FeatureSource::Enhanced => Some(ctx.features(&bundle)?),
        FeatureSource::Raw => None,
    };
    Ok((bundle, enhanced))
}

fn summarize_table(name: &str, key: impl Fn(&EvalReport) -> String, table: &ExperimentTable) -> String {
    let cells: Vec<String> = table
        .rows
        .iter()
        .map(|r| format!("{} {:.3}", key(r), r.mean.accuracy))
        .collect();
    format!("{name}: {}", cells.join(", "))
}

pub fn ablate(ctx: &Ctx) -> Result<String> {
    let (bundle, enhanced) = experiment_inputs(ctx)?;
    let data = ExperimentData { bundle: &bundle, enhanced: enhanced.as_ref() };
    let table = ablate_hyperedges::<f64>(&data, &ctx.experiment_config())?;
    write_table(ctx, "ablate", &table, &ctx.layout.ablation(), &ctx.layout.ablation_csv())?;
    Ok(summarize_table("ablate", |r| r.hyperedges.clone(), &table))
}

pub fn sweep(ctx: &Ctx) -> Result<String> {
    let (bundle, enhanced) = experiment_inputs(ctx)?;
    let data = ExperimentData { bundle: &bundle, enhanced: enhanced.as_ref() };
    let table = label_ratio_sweep::<f64>(&data, &ctx.cfg.eval.fractions, &ctx.experiment_config())?;
    write_table(ctx, "sweep", &table, &ctx.layout.sweep(), &ctx.layout.sweep_csv())?;
    Ok(summarize_table("sweep", |r| format!("f={}", r.train_fraction), &table))
}

pub fn stats(ctx: &Ctx) -> Result<String> {
    let bundle = ctx.bundle()?;
    let report: StatsReport = dataset_stats(&bundle);
    let prov = ctx.provenance("stats");
    write_json(&ctx.layout.stats(), &Stamped { provenance: prov.clone(), body: &report })?;
    let plots = ctx.layout.plots();
    write_with_comment(&plots.join("followers.csv"), &prov, |w| {
        Ok(write_plot_csv(&follower_counts(&bundle), w)?)
    })?;
    write_with_comment(&plots.join("group_sizes.csv"), &prov, |w| {
        Ok(write_plot_csv(&group_sizes(&bundle), w)?)
    })?;
    let top: Vec<String> = report
        .mbti
        .as_ref()
        .map(|d| {
            let mut rows = d.rows.clone();
            rows.sort_by(|a, b| b.count.cmp(&a.count));
            rows.iter()
                .take(3)
                .map(|r| format!("{} {:.2}%", r.label, 100.0 * r.proportion))
                .collect()
        })
        .unwrap_or_default();
    Ok(format!(
        "stats: {} users; top MBTI [{}]; follower alpha {}",
        report.num_users,
        top.join(", "),
        report.followers.map_or("n/a".to_string(), |f| format!("{:.3} (xmin {})", f.alpha, f.xmin))
    ))
}

#[derive(Debug, Serialize, Deserialize)]
struct GradCheckBody {
    threshold: f64,
    passed: bool,
    report: GradCheckReport,
}

pub fn gradcheck(ctx: &Ctx) -> Result<String> {
    let bundle = ctx.bundle()?;
    let graph = ctx.graph()?;
    let features = ctx.features(&bundle)?;
    let labels = bundle.labels(ctx.cfg.scheme);
    let op = PropagationOperator::new(&graph);
    let arch = ctx.cfg.train.architecture(features.cols(), ctx.cfg.scheme.num_classes());
    let model = HgnnModel::<f64>::init(arch, ctx.cfg.seed)?;
    let settings = &ctx.cfg.gradcheck;
    let report = grad_check(
        &op,
        features.view(),
        &labels,
        &model,
        &GradCheckConfig {
            epsilon: settings.epsilon,
            samples: settings.samples,
            seed: ctx.cfg.seed,
            focal_gamma: ctx.cfg.train.focal_gamma,
            mode: ModeSetting::Train,
        },
    )?;
    let passed = report.max_relative_error <= settings.threshold;
    let max = report.max_relative_error;
    let summary = format!(
        "gradcheck: max relative error {max:.3e} over {} parameters (worst {})",
        report.checked, report.worst_parameter
    );
    write_json(
        &ctx.layout.gradcheck(),
        &Stamped {
            provenance: ctx.provenance("gradcheck"),
            body: GradCheckBody { threshold: settings.threshold, passed, report },
        },
    )?;
    if !passed {
        return Err(GradCheckFailed { max, threshold: settings.threshold }.into());
    }
    Ok(summary)
}
