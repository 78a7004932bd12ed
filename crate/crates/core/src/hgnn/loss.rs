//! Class-weighted focal loss over softmax outputs.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Probabilities below this are clamped inside the logarithm.
pub const LOG_CLAMP: f64 = 1e-12;

/// Loss value and its gradient with respect to the pre-softmax scores.
#[derive(Debug, Clone)]
pub struct FocalLoss<S = f64> {
    pub value: S,
    pub grad_logits: Array2<S>,
}

/// `−(1/N) Σ_i w_{y_i} (1 − p̂_{i,y_i})^γ log p̂_{i,y_i}` for `N` labelled rows.
///
/// `probs` must be softmax outputs; the gradient is taken through the softmax.
pub fn focal_loss<S: Scalar>(
    probs: ArrayView2<'_, S>,
    labels: &[usize],
    class_weights: &[S],
    gamma: S,
) -> Result<FocalLoss<S>> {
    if gamma < S::zero() || !gamma.is_finite() {
        return Err(Error::Precondition(format!("focal gamma must be >= 0, got {gamma}")));
    }
    let (n, p) = probs.dim();
    if n == 0 {
        return Err(Error::Precondition("focal loss over zero samples".into()));
    }
    if labels.len() != n {
        return Err(Error::Shape(format!("{} labels for {n} probability rows", labels.len())));
    }
    if class_weights.len() != p {
        return Err(Error::Shape(format!("{} class weights for {p} classes", class_weights.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= p) {
        return Err(Error::Precondition(format!("label {bad} out of range for {p} classes")));
    }

    let clamp = S::of(LOG_CLAMP);
    let inv_n = S::one() / S::of(n as f64);
    let mut value = S::zero();
    let mut grad = Array2::zeros((n, p));
    for (i, &t) in labels.iter().enumerate() {
        let pt = probs[[i, t]];
        let w = class_weights[t];
        let q = S::one() - pt;
        let clamped = pt < clamp;
        let log_p = if clamped { clamp.ln() } else { pt.ln() };
        let modulator = if gamma == S::zero() { S::one() } else { q.powf(gamma) };
        value = value - w * modulator * log_p;

        // d/dz_j of −w (1−p)^γ log p  =  −w [ (1−p)^γ·[p ≥ clamp] − γ (1−p)^{γ−1} p log p ] (δ_tj − p_j)
        let direct = if clamped { S::zero() } else { modulator };
        let focus = if gamma == S::zero() || q == S::zero() {
            S::zero()
        } else {
            gamma * q.powf(gamma - S::one()) * pt * log_p
        };
        let coeff = -w * (direct - focus) * inv_n;
        for j in 0..p {
            let delta = if j == t { S::one() } else { S::zero() };
            grad[[i, j]] = coeff * (delta - probs[[i, j]]);
        }
    }
    Ok(FocalLoss {
        value: value * inv_n,
        grad_logits: grad,
    })
}

/// Inverse-frequency weights `w_c = N_train / (P · max(n_c, 1))`.
pub fn class_weights<S: Scalar>(train_labels: &[usize], num_classes: usize) -> Result<Vec<S>> {
    if train_labels.is_empty() {
        return Err(Error::Precondition("class weights need at least one training label".into()));
    }
    let mut counts = vec![0usize; num_classes];
    for &l in train_labels {
        if l >= num_classes {
            return Err(Error::Precondition(format!("label {l} out of range for {num_classes} classes")));
        }
        counts[l] += 1;
    }
    let total = train_labels.len() as f64;
    Ok(counts
        .iter()
        .map(|&c| S::of(total / (num_classes as f64 * c.max(1) as f64)))
        .collect())
}

/// Row-wise softmax, shifted by the row maximum.
pub fn softmax<S: Scalar>(logits: ArrayView2<'_, S>) -> Array2<S> {
    let mut out = logits.to_owned();
    for mut row in out.rows_mut() {
        let max = row.iter().fold(S::neg_infinity(), |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum: S = row.iter().copied().sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}
