//! Skip-connected hypergraph convolution stack with a linear softmax head.
//!
//! Each layer computes
//!
//! ```text
//! Z     = Θ_op · X · Θ
//! X_out = σ( ReLU(BatchNorm(Z)) + skip(X) )
//! ```
//!
//! where `skip` is the identity when the width is unchanged and a learned
//! projection otherwise. Gradients are derived by hand in [`HgnnModel::backward`].

use ndarray::{Array2, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::softmax;
use super::operator::PropagationOperator;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Identity,
}

impl Activation {
    fn apply<S: Scalar>(self, x: S) -> S {
        match self {
            Activation::Relu => x.max(S::zero()),
            Activation::Identity => x,
        }
    }

    fn derivative<S: Scalar>(self, x: S) -> S {
        match self {
            Activation::Relu if x > S::zero() => S::one(),
            Activation::Relu => S::zero(),
            Activation::Identity => S::one(),
        }
    }
}

/// Structural choices that are fixed for the lifetime of a parameter set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub num_classes: usize,
    /// Outer activation `σ` of the skip block.
    pub activation: Activation,
    /// When false, BatchNorm is replaced by the identity.
    pub batch_norm: bool,
    pub bn_eps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics over the node dimension.
    Train,
    /// Running statistics.
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<S = f64> {
    pub theta: Array2<S>,
    pub skip: Option<Array2<S>>,
    pub bn_scale: Array2<S>,
    pub bn_shift: Array2<S>,
    pub running_mean: Array2<S>,
    pub running_var: Array2<S>,
}

impl<S: Scalar> LayerParams<S> {
    pub fn input_dim(&self) -> usize {
        self.theta.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.theta.ncols()
    }
}

/// Parameters of the whole network.
#[derive(Debug, Clone, PartialEq)]
pub struct HgnnModel<S = f64> {
    pub arch: Architecture,
    pub layers: Vec<LayerParams<S>>,
    pub head_weight: Array2<S>,
    pub head_bias: Array2<S>,
}

/// Intermediate values of one layer kept for the backward pass.
#[derive(Debug, Clone)]
struct LayerCache<S> {
    input: Array2<S>,
    /// BatchNorm output (pre-ReLU).
    normed: Array2<S>,
    /// Standardised values and inverse std, only when BatchNorm is active.
    xhat: Option<Array2<S>>,
    inv_std: Option<Array2<S>>,
    /// Argument of `σ`.
    pre_activation: Array2<S>,
    batch_mean: Option<Array2<S>>,
    batch_var: Option<Array2<S>>,
}

/// Output of a forward pass plus everything the backward pass needs.
#[derive(Debug, Clone)]
pub struct ForwardPass<S = f64> {
    pub mode: Mode,
    pub logits: Array2<S>,
    pub probs: Array2<S>,
    layers: Vec<LayerCache<S>>,
    hidden: Array2<S>,
}

/// Gradient blocks in the order of [`HgnnModel::blocks`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<S = f64> {
    pub blocks: Vec<Array2<S>>,
}

fn uniform_init<S: Scalar>(rng: &mut ChaCha8Rng, rows: usize, cols: usize, fan_in: usize) -> Array2<S> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| S::of(rng.random_range(-bound..bound)))
}

fn column_mean<S: Scalar>(a: &Array2<S>) -> Array2<S> {
    let n = S::of(a.nrows() as f64);
    a.sum_axis(Axis(0)).insert_axis(Axis(0)).mapv(|v| v / n)
}

impl<S: Scalar> HgnnModel<S> {
    /// Seeded uniform fan-in initialisation; BatchNorm starts at unit scale, zero shift.
    pub fn init(arch: Architecture, seed: u64) -> Result<Self> {
        if arch.num_layers == 0 || arch.hidden_dim == 0 || arch.input_dim == 0 || arch.num_classes == 0 {
            return Err(Error::Precondition(format!("degenerate architecture {arch:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(arch.num_layers);
        let mut d_in = arch.input_dim;
        for _ in 0..arch.num_layers {
            let d_out = arch.hidden_dim;
            let theta = uniform_init(&mut rng, d_in, d_out, d_in);
            let skip = (d_in != d_out).then(|| uniform_init(&mut rng, d_in, d_out, d_in));
            layers.push(LayerParams {
                theta,
                skip,
                bn_scale: Array2::ones((1, d_out)),
                bn_shift: Array2::zeros((1, d_out)),
                running_mean: Array2::zeros((1, d_out)),
                running_var: Array2::ones((1, d_out)),
            });
            d_in = d_out;
        }
        let head_weight = uniform_init(&mut rng, d_in, arch.num_classes, d_in);
        let head_bias = uniform_init(&mut rng, 1, arch.num_classes, d_in);
        Ok(HgnnModel {
            arch,
            layers,
            head_weight,
            head_bias,
        })
    }

    /// Named trainable blocks. BatchNorm scale/shift are omitted when BatchNorm is disabled.
    pub fn blocks(&self) -> Vec<(String, &Array2<S>)> {
        let mut out = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            out.push((format!("layer{l}.theta"), &layer.theta));
            if let Some(skip) = &layer.skip {
                out.push((format!("layer{l}.skip"), skip));
            }
            if self.arch.batch_norm {
                out.push((format!("layer{l}.bn_scale"), &layer.bn_scale));
                out.push((format!("layer{l}.bn_shift"), &layer.bn_shift));
            }
        }
        out.push(("head.weight".to_string(), &self.head_weight));
        out.push(("head.bias".to_string(), &self.head_bias));
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut Array2<S>> {
        let bn = self.arch.batch_norm;
        let mut out = Vec::new();
        for layer in &mut self.layers {
            out.push(&mut layer.theta);
            if let Some(skip) = &mut layer.skip {
                out.push(skip);
            }
            if bn {
                out.push(&mut layer.bn_scale);
                out.push(&mut layer.bn_shift);
            }
        }
        out.push(&mut self.head_weight);
        out.push(&mut self.head_bias);
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.blocks().iter().map(|(_, b)| b.len()).sum()
    }

    /// Full forward pass. Running statistics are never touched here; see
    /// [`HgnnModel::update_running_stats`].
    pub fn forward(&self, op: &PropagationOperator<S>, x0: ArrayView2<'_, S>, mode: Mode) -> Result<ForwardPass<S>> {
        if x0.nrows() != op.num_nodes() {
            return Err(Error::Shape(format!(
                "{} feature rows for a {}-node operator",
                x0.nrows(),
                op.num_nodes()
            )));
        }
        if x0.ncols() != self.arch.input_dim {
            return Err(Error::Shape(format!(
                "input width {} but model expects {}",
                x0.ncols(),
                self.arch.input_dim
            )));
        }
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut x = x0.to_owned();
        for (l, layer) in self.layers.iter().enumerate() {
            let (cache, out) = self.layer_forward(op, x, layer, mode);
            if out.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("output of layer {l}")));
            }
            caches.push(cache);
            x = out;
        }
        let logits = x.dot(&self.head_weight) + &self.head_bias;
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("classifier logits".into()));
        }
        let probs = softmax(logits.view());
        Ok(ForwardPass {
            mode,
            logits,
            probs,
            layers: caches,
            hidden: x,
        })
    }

    fn layer_forward(
        &self,
        op: &PropagationOperator<S>,
        input: Array2<S>,
        layer: &LayerParams<S>,
        mode: Mode,
    ) -> (LayerCache<S>, Array2<S>) {
        let eps = S::of(self.arch.bn_eps);
        let z = op.apply(input.dot(&layer.theta).view());

        let (normed, xhat, inv_std, batch_mean, batch_var) = if self.arch.batch_norm {
            let (mean, var) = match mode {
                Mode::Train => {
                    let mean = column_mean(&z);
                    let centered = &z - &mean;
                    let var = column_mean(&centered.mapv(|v| v * v));
                    (mean, var)
                }
                Mode::Eval => (layer.running_mean.clone(), layer.running_var.clone()),
            };
            let inv_std = var.mapv(|v| S::one() / (v + eps).sqrt());
            let xhat = (&z - &mean) * &inv_std;
            let normed = &xhat * &layer.bn_scale + &layer.bn_shift;
            let stats = matches!(mode, Mode::Train);
            (
                normed,
                Some(xhat),
                Some(inv_std),
                stats.then_some(mean),
                stats.then_some(var),
            )
        } else {
            (z, None, None, None, None)
        };

        let skip = match &layer.skip {
            Some(p) => input.dot(p),
            None => input.clone(),
        };
        let pre_activation = normed.mapv(|v| v.max(S::zero())) + skip;
        let act = self.arch.activation;
        let out = pre_activation.mapv(|v| act.apply(v));
        (
            LayerCache {
                input,
                normed,
                xhat,
                inv_std,
                pre_activation,
                batch_mean,
                batch_var,
            },
            out,
        )
    }

    /// Exponential moving average of the batch statistics of a training pass:
    /// `running = momentum·running + (1 − momentum)·batch`, with the unbiased batch variance.
    pub fn update_running_stats(&mut self, pass: &ForwardPass<S>, momentum: f64) {
        let m = S::of(momentum);
        let one_minus = S::one() - m;
        for (layer, cache) in self.layers.iter_mut().zip(&pass.layers) {
            if let (Some(mean), Some(var)) = (&cache.batch_mean, &cache.batch_var) {
                let n = cache.input.nrows() as f64;
                let unbias = S::of(if n > 1.0 { n / (n - 1.0) } else { 1.0 });
                Zip::from(&mut layer.running_mean)
                    .and(mean)
                    .for_each(|r, &b| *r = m * *r + one_minus * b);
                Zip::from(&mut layer.running_var)
                    .and(var)
                    .for_each(|r, &b| *r = m * *r + one_minus * b * unbias);
            }
        }
    }

    /// Backpropagates `d loss / d logits` (an `N x P` matrix, zero on rows that do
    /// not contribute) through the whole network.
    pub fn backward(&self, op: &PropagationOperator<S>, pass: &ForwardPass<S>, grad_logits: ArrayView2<'_, S>) -> Gradients<S> {
        let mut per_layer: Vec<Vec<Array2<S>>> = Vec::with_capacity(self.layers.len());

        let d_head_w = pass.hidden.t().dot(&grad_logits);
        let d_head_b = grad_logits.sum_axis(Axis(0)).insert_axis(Axis(0));
        let mut d_x = grad_logits.dot(&self.head_weight.t());

        for (l, (layer, cache)) in self.layers.iter().zip(&pass.layers).enumerate().rev() {
            let act = self.arch.activation;
            let d_pre = Zip::from(&d_x)
                .and(&cache.pre_activation)
                .map_collect(|&g, &a| g * act.derivative(a));

            let (d_skip_param, d_x_skip) = match &layer.skip {
                Some(p) => (Some(cache.input.t().dot(&d_pre)), d_pre.dot(&p.t())),
                None => (None, d_pre.clone()),
            };

            let d_normed = Zip::from(&d_pre)
                .and(&cache.normed)
                .map_collect(|&g, &b| if b > S::zero() { g } else { S::zero() });

            let mut bn_grads = None;
            let d_z = match (&cache.xhat, &cache.inv_std) {
                (Some(xhat), Some(inv_std)) => {
                    let d_scale = (&d_normed * xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
                    let d_shift = d_normed.sum_axis(Axis(0)).insert_axis(Axis(0));
                    let d_xhat = &d_normed * &layer.bn_scale;
                    let d_z = match pass.mode {
                        Mode::Train => {
                            // dZ = inv_std · (dx̂ − mean(dx̂) − x̂ · mean(dx̂ ⊙ x̂))
                            let mean_dxhat = column_mean(&d_xhat);
                            let mean_dxhat_xhat = column_mean(&(&d_xhat * xhat));
                            (&d_xhat - &mean_dxhat - &(xhat * &mean_dxhat_xhat)) * inv_std
                        }
                        Mode::Eval => &d_xhat * inv_std,
                    };
                    bn_grads = Some((d_scale, d_shift));
                    d_z
                }
                _ => d_normed,
            };

            // Θ_op is symmetric, so its transpose is itself.
            let d_xw = op.apply(d_z.view());
            let d_theta = cache.input.t().dot(&d_xw);

            let mut blocks = vec![d_theta];
            if let Some(g) = d_skip_param {
                blocks.push(g);
            }
            if self.arch.batch_norm {
                let (s, b) = bn_grads.unwrap_or_else(|| {
                    (
                        Array2::zeros(layer.bn_scale.raw_dim()),
                        Array2::zeros(layer.bn_shift.raw_dim()),
                    )
                });
                blocks.push(s);
                blocks.push(b);
            }
            per_layer.push(blocks);

            if l > 0 {
                d_x = d_xw.dot(&layer.theta.t()) + d_x_skip;
            }
        }

        let mut blocks: Vec<Array2<S>> = per_layer.into_iter().rev().flatten().collect();
        blocks.push(d_head_w);
        blocks.push(d_head_b);
        Gradients { blocks }
    }

    /// Class probabilities in evaluation mode.
    pub fn predict(&self, op: &PropagationOperator<S>, x0: ArrayView2<'_, S>) -> Result<Array2<S>> {
        Ok(self.forward(op, x0, Mode::Eval)?.probs)
    }

    /// Converts every block to another scalar type.
    pub fn cast<T: Scalar>(&self) -> HgnnModel<T> {
        let c = |a: &Array2<S>| a.mapv(|v| T::of(v.as_f64()));
        HgnnModel {
            arch: self.arch,
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    theta: c(&l.theta),
                    skip: l.skip.as_ref().map(c),
                    bn_scale: c(&l.bn_scale),
                    bn_shift: c(&l.bn_shift),
                    running_mean: c(&l.running_mean),
                    running_var: c(&l.running_var),
                })
                .collect(),
            head_weight: c(&self.head_weight),
            head_bias: c(&self.head_bias),
        }
    }
}

/// Computes one skip block outside a full model; used to check the layer algebra directly.
pub fn layer_forward<S: Scalar>(
    op: &PropagationOperator<S>,
    x_in: ArrayView2<'_, S>,
    layer: &LayerParams<S>,
    arch: &Architecture,
    mode: Mode,
) -> Result<(Array2<S>, Array2<S>)> {
    if x_in.nrows() != op.num_nodes() || x_in.ncols() != layer.input_dim() {
        return Err(Error::Shape(format!(
            "layer expects {}x{}, got {}x{}",
            op.num_nodes(),
            layer.input_dim(),
            x_in.nrows(),
            x_in.ncols()
        )));
    }
    if layer.skip.is_none() && layer.input_dim() != layer.output_dim() {
        return Err(Error::Shape("width change without a skip projection".into()));
    }
    let model = HgnnModel {
        arch: *arch,
        layers: Vec::new(),
        head_weight: Array2::zeros((0, 0)),
        head_bias: Array2::zeros((0, 0)),
    };
    let z = op.apply(x_in.dot(&layer.theta).view());
    let (_, out) = model.layer_forward(op, x_in.to_owned(), layer, mode);
    Ok((z, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypergraph::{HyperedgeKind, Hypergraph};
    use ndarray::arr2;

    fn arch(d: usize, bn: bool, act: Activation) -> Architecture {
        Architecture {
            input_dim: d,
            hidden_dim: d,
            num_layers: 1,
            num_classes: 2,
            activation: act,
            batch_norm: bn,
            bn_eps: 1e-5,
        }
    }

    fn identity_layer(d: usize) -> LayerParams<f64> {
        LayerParams {
            theta: Array2::eye(d),
            skip: None,
            bn_scale: Array2::ones((1, d)),
            bn_shift: Array2::zeros((1, d)),
            running_mean: Array2::zeros((1, d)),
            running_var: Array2::ones((1, d)),
        }
    }

    /// Θ_op = I: every node in its own singleton hyperedge.
    fn identity_operator(n: usize) -> PropagationOperator<f64> {
        let g = Hypergraph::from_member_lists(n, HyperedgeKind::For, (0..n).map(|i| vec![i])).unwrap();
        PropagationOperator::new(&g)
    }

    #[test]
    fn identity_reduction() {
        let op = identity_operator(3);
        let x = arr2(&[[1.0, -2.0], [-0.5, 0.0], [3.0, 4.0]]);
        let (z, out) = layer_forward(&op, x.view(), &identity_layer(2), &arch(2, false, Activation::Identity), Mode::Train).unwrap();
        assert_eq!(z, x);
        let expected = x.mapv(|v: f64| v.max(0.0)) + &x;
        assert_eq!(out, expected);
    }

    #[test]
    fn zero_input_propagates_shift() {
        let op = identity_operator(2);
        let mut layer = identity_layer(2);
        layer.bn_shift = arr2(&[[0.3, -0.4]]);
        let x = Array2::zeros((2, 2));
        let (z, out) = layer_forward(&op, x.view(), &layer, &arch(2, true, Activation::Relu), Mode::Eval).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
        assert_eq!(out, arr2(&[[0.3, 0.0], [0.3, 0.0]]));
    }

    #[test]
    fn two_node_hand_case() {
        // Θ_op = [[.5,.5],[.5,.5]], Θ = [2], x = (1, 3): Z = (4, 4).
        let g = Hypergraph::from_member_lists(2, HyperedgeKind::For, [vec![0, 1]]).unwrap();
        let op = PropagationOperator::new(&g);
        let mut layer = identity_layer(1);
        layer.theta = arr2(&[[2.0]]);
        let x = arr2(&[[1.0], [3.0]]);
        let (z, out) = layer_forward(&op, x.view(), &layer, &arch(1, false, Activation::Relu), Mode::Train).unwrap();
        assert_eq!(z, arr2(&[[4.0], [4.0]]));
        assert_eq!(out, arr2(&[[5.0], [7.0]]));

        // With batch statistics, Z has zero variance: BN output is the shift (0).
        let (_, out) = layer_forward(&op, x.view(), &layer, &arch(1, true, Activation::Relu), Mode::Train).unwrap();
        assert_eq!(out, arr2(&[[1.0], [3.0]]));
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let op = identity_operator(3);
        let x = Array2::zeros((2, 2));
        assert!(layer_forward(&op, x.view(), &identity_layer(2), &arch(2, false, Activation::Relu), Mode::Eval).is_err());
    }

    #[test]
    fn forward_rows_are_distributions() {
        let g = Hypergraph::from_member_lists(4, HyperedgeKind::Top, [vec![0, 1, 2], vec![2, 3]]).unwrap();
        let op = PropagationOperator::new(&g);
        let a = Architecture {
            input_dim: 3,
            hidden_dim: 5,
            num_layers: 2,
            num_classes: 4,
            activation: Activation::Relu,
            batch_norm: true,
            bn_eps: 1e-5,
        };
        let m = HgnnModel::<f64>::init(a, 7).unwrap();
        let x = Array2::from_shape_fn((4, 3), |(i, j)| (i * 3 + j) as f64 * 0.1 - 0.5);
        for mode in [Mode::Train, Mode::Eval] {
            let p = m.forward(&op, x.view(), mode).unwrap().probs;
            for row in p.rows() {
                assert!((row.sum() - 1.0).abs() < 1e-9);
                assert!(row.iter().all(|v| v.is_finite()));
            }
        }
        let bad = Array2::zeros((4, 2));
        assert!(m.forward(&op, bad.view(), Mode::Eval).is_err());
    }

    #[test]
    fn gradient_block_shapes_match_parameters() {
        let g = Hypergraph::from_member_lists(3, HyperedgeKind::Top, [vec![0, 1, 2]]).unwrap();
        let op = PropagationOperator::new(&g);
        let a = Architecture {
            input_dim: 2,
            hidden_dim: 3,
            num_layers: 2,
            num_classes: 2,
            activation: Activation::Relu,
            batch_norm: true,
            bn_eps: 1e-5,
        };
        let m = HgnnModel::<f64>::init(a, 1).unwrap();
        let x = arr2(&[[0.1, 0.2], [0.3, -0.4], [0.5, 0.9]]);
        let pass = m.forward(&op, x.view(), Mode::Train).unwrap();
        let grads = m.backward(&op, &pass, Array2::ones((3, 2)).view());
        let shapes: Vec<_> = m.blocks().iter().map(|(_, b)| b.dim()).collect();
        let gshapes: Vec<_> = grads.blocks.iter().map(|b| b.dim()).collect();
        assert_eq!(shapes, gshapes);
    }
}
