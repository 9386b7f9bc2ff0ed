//! Latent update rules.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    /// `t ← t − lr·∇`.
    PlainGradientDescent,
    /// Adam with β₁ = 0.9, β₂ = 0.999, ε = 1e-8.
    #[default]
    AdaptiveMoments,
}

#[derive(Debug, Clone)]
pub enum Optimizer {
    Plain,
    Adam {
        m: Vec<f64>,
        v: Vec<f64>,
        steps: i32,
    },
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

impl Optimizer {
    pub fn new(kind: OptimizerKind, len: usize) -> Self {
        match kind {
            OptimizerKind::PlainGradientDescent => Optimizer::Plain,
            OptimizerKind::AdaptiveMoments => Optimizer::Adam {
                m: vec![0.0; len],
                v: vec![0.0; len],
                steps: 0,
            },
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        debug_assert_eq!(params.len(), grad.len());
        match self {
            Optimizer::Plain => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= lr * g;
                }
            }
            Optimizer::Adam { m, v, steps } => {
                *steps += 1;
                let c1 = 1.0 - BETA1.powi(*steps);
                let c2 = 1.0 - BETA2.powi(*steps);
                for i in 0..params.len() {
                    m[i] = BETA1 * m[i] + (1.0 - BETA1) * grad[i];
                    v[i] = BETA2 * v[i] + (1.0 - BETA2) * grad[i] * grad[i];
                    params[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + EPS);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_step_follows_negative_gradient() {
        let mut p = vec![1.0, -2.0];
        Optimizer::new(OptimizerKind::PlainGradientDescent, 2).step(&mut p, &[0.5, -1.0], 0.1);
        assert_eq!(p, vec![0.95, -1.9]);
    }

    #[test]
    fn first_adam_step_moves_by_learning_rate() {
        let mut p = vec![0.0, 0.0];
        let mut opt = Optimizer::new(OptimizerKind::AdaptiveMoments, 2);
        opt.step(&mut p, &[3.0, -0.01], 0.1);
        assert!((p[0] + 0.1).abs() < 1e-6);
        assert!((p[1] - 0.1).abs() < 1e-5);
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        for kind in [
            OptimizerKind::PlainGradientDescent,
            OptimizerKind::AdaptiveMoments,
        ] {
            let mut p = vec![0.3, 0.7];
            Optimizer::new(kind, 2).step(&mut p, &[1.0, 1.0], 0.0);
            assert_eq!(p, vec![0.3, 0.7]);
        }
    }
}
