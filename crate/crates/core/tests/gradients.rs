//! Finite-difference checks of the manual backward pass.

use hypersoc_core::hgnn::gradcheck::ModeSetting;
use hypersoc_core::hgnn::{grad_check, Activation, Architecture, GradCheckConfig, HgnnModel, Mode};
use hypersoc_core::hypergraph::{Hyperedge, HyperedgeKind};
use hypersoc_core::{Hypergraph, PropagationOperator};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Fixture {
    op: PropagationOperator,
    x: Array2<f64>,
    labels: Vec<Option<usize>>,
}

fn fixture(n: usize, d: usize, classes: usize, seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges: Vec<Hyperedge> = Vec::new();
    for id in 0..8 {
        let size = rng.random_range(2..6);
        let mut members: Vec<usize> = (0..size).map(|_| rng.random_range(0..n)).collect();
        members.sort_unstable();
        members.dedup();
        if edges.iter().all(|e| e.members != members) {
            edges.push(Hyperedge { id, kind: HyperedgeKind::Top, members });
        }
    }
    // chain every node so none is isolated
    for i in 0..n - 1 {
        edges.push(Hyperedge { id: 100 + i, kind: HyperedgeKind::For, members: vec![i, i + 1] });
    }
    let m = edges.len();
    let g = Hypergraph::new(
        n,
        edges,
        (0..n).map(|_| rng.random_range(0.5..2.0)).collect(),
        (0..m).map(|_| rng.random_range(0.5..2.0)).collect(),
    )
    .unwrap();
    let x = Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0));
    let labels = (0..n)
        .map(|i| if i % 5 == 4 { None } else { Some(rng.random_range(0..classes)) })
        .collect();
    Fixture { op: PropagationOperator::new(&g), x, labels }
}

fn arch(activation: Activation, batch_norm: bool) -> Architecture {
    Architecture {
        input_dim: 5,
        hidden_dim: 6,
        num_layers: 2,
        num_classes: 3,
        activation,
        batch_norm,
        bn_eps: 1e-5,
    }
}

#[test]
fn linear_regime_matches_finite_differences() {
    for seed in 0..3 {
        let f = fixture(20, 5, 3, seed);
        let model = HgnnModel::<f64>::init(arch(Activation::Identity, false), seed).unwrap();
        let cfg = GradCheckConfig { focal_gamma: 0.0, samples: 150, seed, ..Default::default() };
        let r = grad_check(&f.op, f.x.view(), &f.labels, &model, &cfg).unwrap();
        println!("seed {seed}: {r:?}");
        assert!(r.checked >= 100);
        assert!(r.max_relative_error < 1e-6, "{r:?}");
    }
}

#[test]
fn full_stack_matches_finite_differences() {
    for seed in 0..3 {
        let f = fixture(20, 5, 3, seed);
        let mut model = HgnnModel::<f64>::init(arch(Activation::Relu, true), seed).unwrap();
        // move BN off its initial point so scale/shift gradients are exercised
        for l in &mut model.layers {
            l.bn_scale.mapv_inplace(|v| v * 1.3);
            l.bn_shift.fill(0.1);
        }
        let cfg = GradCheckConfig { focal_gamma: 2.0, samples: 150, seed, ..Default::default() };
        let r = grad_check(&f.op, f.x.view(), &f.labels, &model, &cfg).unwrap();
        println!("seed {seed}: {r:?}");
        assert!(r.max_relative_error < 1e-4, "{r:?}");
    }
}

#[test]
fn eval_mode_matches_finite_differences() {
    let f = fixture(20, 5, 3, 9);
    let mut model = HgnnModel::<f64>::init(arch(Activation::Relu, true), 9).unwrap();
    let pass = model.forward(&f.op, f.x.view(), Mode::Train).unwrap();
    model.update_running_stats(&pass, 0.5);
    let cfg = GradCheckConfig { focal_gamma: 1.5, mode: ModeSetting::Eval, ..Default::default() };
    let r = grad_check(&f.op, f.x.view(), &f.labels, &model, &cfg).unwrap();
    assert!(r.max_relative_error < 1e-4, "{r:?}");
}

#[test]
fn zero_step_is_rejected() {
    let f = fixture(10, 5, 3, 1);
    let model = HgnnModel::<f64>::init(arch(Activation::Relu, true), 1).unwrap();
    let cfg = GradCheckConfig { epsilon: 0.0, ..Default::default() };
    assert!(grad_check(&f.op, f.x.view(), &f.labels, &model, &cfg).is_err());
}
