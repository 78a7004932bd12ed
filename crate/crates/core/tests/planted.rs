//! The bundled planted-signal fixture and its end-to-end learnability.

use std::path::Path;

use hypersoc_core::domain::Scheme;
use hypersoc_core::enhance::{build_prompt, embed, enhance_profiles, EmbedderSpec, EnhanceOptions, MockClient, ProfileCache};
use hypersoc_core::envgen::HyperedgeSpec;
use hypersoc_core::eval::{run_experiment, ExperimentConfig, ExperimentData};
use hypersoc_core::hypergraph::HyperedgeKind;
use hypersoc_core::ingest::{load_dataset, strip_labels};
use hypersoc_core::synth::{planted_dataset, PlantedConfig};

fn fixture_dir() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/planted200")
}

#[test]
fn bundled_fixture_matches_generator() {
    let planted = planted_dataset(&PlantedConfig::default()).unwrap();
    let users = std::fs::read_to_string(fixture_dir().join("users.jsonl")).unwrap();
    let edges = std::fs::read_to_string(fixture_dir().join("edges.csv")).unwrap();
    assert_eq!(users, planted.users_jsonl);
    assert_eq!(edges, planted.edges_csv);

    let dir = fixture_dir();
    let bundle = load_dataset(&dir.join("users.jsonl"), &dir.join("edges.csv")).unwrap();
    assert_eq!(bundle, planted.bundle().unwrap());
}

#[test]
fn mock_narratives_carry_group_names_and_learn_the_signal() {
    let bundle = planted_dataset(&PlantedConfig::default()).unwrap().bundle().unwrap();
    let stripped = strip_labels(&bundle);
    let prompts: Vec<_> = stripped.users.iter().map(|u| build_prompt(u).unwrap()).collect();
    let (profiles, stats) = enhance_profiles(&MockClient::default(), &prompts, &ProfileCache::new(), &EnhanceOptions::default());
    assert_eq!(stats.fallbacks, 0);
    for (u, p) in bundle.users.iter().zip(&profiles) {
        assert!(!p.narrative.contains(&u.mbti.unwrap().to_string()));
        for g in &u.group_names {
            assert!(p.narrative.contains(g.as_str()), "{} lacks {g}", p.narrative);
        }
    }

    let texts: Vec<String> = profiles.into_iter().map(|p| p.narrative).collect();
    let feats = embed(&EmbedderSpec::hash(384), &texts).unwrap().features;
    let data = ExperimentData { bundle: &bundle, enhanced: Some(&feats) };
    let cfg = ExperimentConfig {
        hyperedges: HyperedgeSpec::with_kinds(&[HyperedgeKind::For]),
        scheme: Scheme::Mbti16,
        n_reps: 1,
        ..Default::default()
    };
    let report = run_experiment::<f64>(&data, &cfg).unwrap();
    assert!(report.mean.accuracy >= 0.9, "{:?}", report.mean);
}
