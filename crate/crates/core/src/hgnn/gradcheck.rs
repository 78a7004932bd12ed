//! Central finite-difference verification of the hand-derived gradients.

use ndarray::{Array2, ArrayView2};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{class_weights, focal_loss};
use super::model::{HgnnModel, Mode};
use super::operator::PropagationOperator;
use crate::error::{Error, Result};

/// Denominator floor of the relative error. Central differences at `ε = 1e-5`
/// carry roughly `1e-11` of rounding noise, so gradients smaller than this
/// floor are compared on an absolute scale.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCheckConfig {
    pub epsilon: f64,
    pub samples: usize,
    pub seed: u64,
    pub focal_gamma: f64,
    pub mode: ModeSetting,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeSetting {
    Train,
    Eval,
}

impl From<ModeSetting> for Mode {
    fn from(m: ModeSetting) -> Mode {
        match m {
            ModeSetting::Train => Mode::Train,
            ModeSetting::Eval => Mode::Eval,
        }
    }
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            epsilon: 1e-5,
            samples: 100,
            seed: 0,
            focal_gamma: 2.0,
            mode: ModeSetting::Train,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub checked: usize,
    pub worst_parameter: String,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR);
    (analytic - numeric).abs() / denom
}

/// Compares the analytic gradient of the focal loss over all labelled nodes against
/// central differences on randomly sampled parameters (all of them when fewer
/// than `samples` exist).
pub fn grad_check(
    op: &PropagationOperator<f64>,
    x0: ArrayView2<'_, f64>,
    labels: &[Option<usize>],
    model: &HgnnModel<f64>,
    config: &GradCheckConfig,
) -> Result<GradCheckReport> {
    if config.epsilon <= 0.0 || !config.epsilon.is_finite() {
        return Err(Error::Precondition(format!(
            "finite-difference step must be positive, got {}",
            config.epsilon
        )));
    }
    let ids: Vec<usize> = (0..labels.len()).filter(|&i| labels[i].is_some()).collect();
    if ids.is_empty() {
        return Err(Error::Precondition("gradient check needs labelled nodes".into()));
    }
    let ys: Vec<usize> = ids.iter().map(|&i| labels[i].unwrap_or(0)).collect();
    let p = model.arch.num_classes;
    let weights = class_weights::<f64>(&ys, p)?;
    let mode: Mode = config.mode.into();

    let loss_of = |m: &HgnnModel<f64>| -> Result<(f64, Array2<f64>, super::model::ForwardPass<f64>)> {
        let pass = m.forward(op, x0, mode)?;
        let probs = pass.probs.select(ndarray::Axis(0), &ids);
        let l = focal_loss(probs.view(), &ys, &weights, config.focal_gamma)?;
        Ok((l.value, l.grad_logits, pass))
    };

    let (_, grad_rows, pass) = loss_of(model)?;
    let mut grad_logits = Array2::zeros(pass.probs.raw_dim());
    for (r, &i) in ids.iter().enumerate() {
        grad_logits.row_mut(i).assign(&grad_rows.row(r));
    }
    let analytic = model.backward(op, &pass, grad_logits.view());

    let names: Vec<String> = model.blocks().iter().map(|(n, _)| n.clone()).collect();
    let sizes: Vec<usize> = model.blocks().iter().map(|(_, b)| b.len()).collect();
    let total: usize = sizes.iter().sum();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let picks: Vec<usize> = if total <= config.samples {
        (0..total).collect()
    } else {
        let mut v = sample(&mut rng, total, config.samples).into_vec();
        v.sort_unstable();
        v
    };

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        checked: 0,
        worst_parameter: String::new(),
        worst_analytic: 0.0,
        worst_numeric: 0.0,
    };
    let mut probe = model.clone();
    for flat in picks {
        let (mut block, mut offset) = (0, flat);
        while offset >= sizes[block] {
            offset -= sizes[block];
            block += 1;
        }
        let original = {
            let blocks = probe.blocks_mut();
            let b = blocks.into_iter().nth(block).expect("block index");
            let slot = b.as_slice_mut().expect("standard layout")[offset];
            slot
        };
        let set = |m: &mut HgnnModel<f64>, v: f64| {
            let b = m.blocks_mut().into_iter().nth(block).expect("block index");
            b.as_slice_mut().expect("standard layout")[offset] = v;
        };
        set(&mut probe, original + config.epsilon);
        let plus = loss_of(&probe)?.0;
        set(&mut probe, original - config.epsilon);
        let minus = loss_of(&probe)?.0;
        set(&mut probe, original);

        let numeric = (plus - minus) / (2.0 * config.epsilon);
        let a = analytic.blocks[block].as_slice().expect("standard layout")[offset];
        let err = relative_error(a, numeric);
        report.checked += 1;
        if err > report.max_relative_error || report.worst_parameter.is_empty() {
            report.max_relative_error = err.max(report.max_relative_error);
            report.worst_parameter = format!("{}[{offset}]", names[block]);
            report.worst_analytic = a;
            report.worst_numeric = numeric;
        }
    }
    Ok(report)
}
