//! Transductive full-batch training: every node is propagated, only training
//! nodes contribute to the loss.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::loss::{class_weights, focal_loss};
use super::model::{Activation, Architecture, HgnnModel, Mode};
use super::operator::PropagationOperator;
use super::optim::Adam;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub layers: usize,
    pub hidden_dim: usize,
    pub focal_gamma: f64,
    pub seed: u64,
    pub bn_momentum: f64,
    pub bn_eps: f64,
    /// Stop once this many epochs pass without a new best validation checkpoint; 0 disables.
    pub patience: usize,
    pub activation: Activation,
    pub batch_norm: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            weight_decay: 5e-4,
            max_epochs: 500,
            layers: 2,
            hidden_dim: 128,
            focal_gamma: 2.0,
            seed: 0,
            bn_momentum: 0.9,
            bn_eps: 1e-5,
            patience: 100,
            activation: Activation::Relu,
            batch_norm: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = self.learning_rate > 0.0
            && self.weight_decay >= 0.0
            && self.focal_gamma >= 0.0
            && self.bn_momentum > 0.0
            && self.bn_momentum < 1.0
            && self.bn_eps > 0.0
            && self.hidden_dim > 0;
        if !positive || self.layers == 0 {
            return Err(Error::Precondition(format!("invalid training configuration {self:?}")));
        }
        Ok(())
    }

    pub fn architecture(&self, input_dim: usize, num_classes: usize) -> Architecture {
        Architecture {
            input_dim,
            hidden_dim: self.hidden_dim,
            num_layers: self.layers,
            num_classes,
            activation: self.activation,
            batch_norm: self.batch_norm,
            bn_eps: self.bn_eps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
}

/// Everything training needs besides the configuration.
#[derive(Debug, Clone, Copy)]
pub struct TrainInput<'a, S> {
    pub operator: &'a PropagationOperator<S>,
    pub features: ArrayView2<'a, S>,
    /// Class index per node, `None` for unlabeled nodes.
    pub labels: &'a [Option<usize>],
    pub num_classes: usize,
    pub train_ids: &'a [usize],
    pub val_ids: &'a [usize],
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<S = f64> {
    /// Parameters of the best validation checkpoint.
    pub model: HgnnModel<S>,
    pub history: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
}

fn labels_of(labels: &[Option<usize>], ids: &[usize]) -> Result<Vec<usize>> {
    ids.iter()
        .map(|&i| {
            labels
                .get(i)
                .copied()
                .flatten()
                .ok_or_else(|| Error::Precondition(format!("node {i} in a split has no label")))
        })
        .collect()
}

/// Fraction of `ids` whose arg-max prediction equals the label; ties go to the lower class.
pub fn accuracy_on<S: Scalar>(probs: &Array2<S>, ids: &[usize], labels: &[usize]) -> f64 {
    if ids.is_empty() {
        return 0.0;
    }
    let hits = ids
        .iter()
        .zip(labels)
        .filter(|(&i, &y)| argmax(probs.row(i).iter().copied()) == y)
        .count();
    hits as f64 / ids.len() as f64
}

pub(crate) fn argmax<S: Scalar>(values: impl Iterator<Item = S>) -> usize {
    let mut best = 0;
    let mut best_v = S::neg_infinity();
    for (i, v) in values.enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

pub fn train<S: Scalar>(input: TrainInput<'_, S>, config: &TrainConfig) -> Result<TrainOutcome<S>> {
    config.validate()?;
    let n = input.operator.num_nodes();
    if input.features.nrows() != n || input.labels.len() != n {
        return Err(Error::Shape(format!(
            "{} feature rows and {} labels for {n} nodes",
            input.features.nrows(),
            input.labels.len()
        )));
    }
    if input.train_ids.is_empty() {
        return Err(Error::Precondition("training split is empty".into()));
    }
    if input.train_ids.iter().any(|i| input.val_ids.contains(i)) {
        return Err(Error::Precondition("training and validation splits overlap".into()));
    }
    let train_labels = labels_of(input.labels, input.train_ids)?;
    let val_labels = labels_of(input.labels, input.val_ids)?;
    let weights: Vec<S> = class_weights(&train_labels, input.num_classes)?;
    let gamma = S::of(config.focal_gamma);

    let arch = config.architecture(input.features.ncols(), input.num_classes);
    let mut model = HgnnModel::<S>::init(arch, config.seed)?;
    let mut adam = Adam::<S>::new(config.learning_rate, config.weight_decay);
    let mut history = Vec::new();
    let mut best: Option<(f64, f64, usize, HgnnModel<S>)> = None;

    for epoch in 0..config.max_epochs {
        let pass = model.forward(input.operator, input.features, Mode::Train)?;
        let train_probs = pass.probs.select(ndarray::Axis(0), input.train_ids);
        let loss = focal_loss(train_probs.view(), &train_labels, &weights, gamma)?;
        let loss_value = loss.value.as_f64();
        if !loss_value.is_finite() {
            return Err(Error::Diverged {
                epoch,
                loss: loss_value,
            });
        }
        let mut grad_logits = Array2::zeros(pass.probs.raw_dim());
        for (row, &i) in input.train_ids.iter().enumerate() {
            grad_logits.row_mut(i).assign(&loss.grad_logits.row(row));
        }
        let grads = model.backward(input.operator, &pass, grad_logits.view());
        model.update_running_stats(&pass, config.bn_momentum);
        adam.step(model.blocks_mut(), &grads.blocks);

        let eval_probs = model.predict(input.operator, input.features)?;
        let val_accuracy = accuracy_on(&eval_probs, input.val_ids, &val_labels);
        let val_loss = if input.val_ids.is_empty() {
            loss_value
        } else {
            let vp = eval_probs.select(ndarray::Axis(0), input.val_ids);
            focal_loss(vp.view(), &val_labels, &weights, gamma)?.value.as_f64()
        };
        history.push(EpochRecord {
            epoch,
            train_loss: loss_value,
            val_accuracy,
        });

        let improved = match &best {
            None => true,
            Some((acc, vloss, _, _)) => val_accuracy > *acc || (val_accuracy == *acc && val_loss < *vloss),
        };
        if improved {
            best = Some((val_accuracy, val_loss, epoch, model.clone()));
        } else if config.patience > 0 {
            let since = best.as_ref().map(|b| epoch - b.2).unwrap_or(0);
            if since >= config.patience {
                break;
            }
        }
    }

    Ok(match best {
        Some((_, _, epoch, m)) => TrainOutcome {
            model: m,
            history,
            best_epoch: Some(epoch),
        },
        None => TrainOutcome {
            model,
            history,
            best_epoch: None,
        },
    })
}
