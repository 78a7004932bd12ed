use ndarray::{Array2, Zip};

use crate::scalar::Scalar;

/// Adam with classic L2 weight decay: `g ← g + λ·θ` before the moment updates.
#[derive(Debug, Clone)]
pub struct Adam<S = f64> {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: i32,
    m: Vec<Array2<S>>,
    v: Vec<Array2<S>>,
}

impl<S: Scalar> Adam<S> {
    pub fn new(learning_rate: f64, weight_decay: f64) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> i32 {
        self.step
    }

    pub fn step(&mut self, params: Vec<&mut Array2<S>>, grads: &[Array2<S>]) {
        assert_eq!(params.len(), grads.len(), "parameter/gradient block count mismatch");
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| Array2::zeros(g.raw_dim())).collect();
            self.v = grads.iter().map(|g| Array2::zeros(g.raw_dim())).collect();
        }
        self.step += 1;
        let (b1, b2) = (S::of(self.beta1), S::of(self.beta2));
        let one = S::one();
        let bc1 = one - S::of(self.beta1.powi(self.step));
        let bc2 = one - S::of(self.beta2.powi(self.step));
        let lr = S::of(self.learning_rate);
        let wd = S::of(self.weight_decay);
        let eps = S::of(self.eps);
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                let g = g + wd * *p;
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = arr2(&[[1.0, -1.0]]);
        let g = arr2(&[[0.5, -2.0]]);
        let mut adam = Adam::<f64>::new(0.1, 0.0);
        adam.step(vec![&mut p], &[g]);
        // bias-corrected first step is lr * sign(g)
        assert!((p[[0, 0]] - 0.9).abs() < 1e-6);
        assert!((p[[0, 1]] + 0.9).abs() < 1e-6);
    }

    #[test]
    fn minimises_a_quadratic() {
        let mut p = arr2(&[[3.0, -2.0]]);
        let mut adam = Adam::<f64>::new(0.05, 0.0);
        for _ in 0..2000 {
            let g = p.mapv(|x| 2.0 * x);
            adam.step(vec![&mut p], &[g]);
        }
        assert!(p.iter().all(|x| x.abs() < 1e-2));
    }

    #[test]
    fn weight_decay_shrinks_without_gradient() {
        let mut p = arr2(&[[1.0]]);
        let mut adam = Adam::<f64>::new(0.01, 0.5);
        adam.step(vec![&mut p], &[arr2(&[[0.0]])]);
        assert!(p[[0, 0]] < 1.0);
    }
}
