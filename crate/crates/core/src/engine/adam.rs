use serde::{Deserialize, Serialize};

use super::param::Param;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub learning_rate: f64,
}

impl Default for AdamState {
    fn default() -> Self {
        Self::new(0.001)
    }
}

impl AdamState {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            step_count: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            learning_rate,
        }
    }

    /// One bias-corrected Adam update over every parameter, then clears the
    /// gradients. `step_count` advances once per call.
    pub fn step(&mut self, params: &mut [&mut Param]) {
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, eps, lr) = (self.beta1, self.beta2, self.epsilon, self.learning_rate);
        for p in params.iter_mut() {
            let Param {
                value,
                grad,
                adam_m,
                adam_v,
                ..
            } = &mut **p;
            let iter = value
                .data_mut()
                .iter_mut()
                .zip(grad.data_mut().iter_mut())
                .zip(adam_m.data_mut().iter_mut().zip(adam_v.data_mut().iter_mut()));
            for ((theta, g), (m, v)) in iter {
                *m = b1 * *m + (1.0 - b1) * *g;
                *v = b2 * *v + (1.0 - b2) * *g * *g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *theta -= lr * m_hat / (v_hat.sqrt() + eps);
                *g = 0.0;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::matrix::Matrix;

    fn param(values: Vec<f64>, grad: f64) -> Param {
        let n = values.len();
        let mut p = Param::new("p", Matrix::from_vec(1, n, values).unwrap());
        p.grad.fill(grad);
        p
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = param(vec![0.5, -1.0], 0.0);
        let mut adam = AdamState::default();
        adam.step(&mut [&mut p]);
        assert_eq!(p.value.data(), &[0.5, -1.0]);
        assert_eq!(adam.step_count, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = param(vec![0.0], 1.0);
        let mut adam = AdamState::new(0.001);
        adam.step(&mut [&mut p]);
        // m_hat = 1, v_hat = 1  =>  delta = -lr / (1 + eps)
        let expected = -0.001 / (1.0 + 1e-8);
        assert!((p.value.data()[0] - expected).abs() < 1e-15);
        assert_eq!(p.grad.data(), &[0.0]);
    }

    #[test]
    fn constant_gradient_does_not_blow_up() {
        let mut p = param(vec![0.0], 1.0);
        let mut adam = AdamState::new(0.001);
        adam.step(&mut [&mut p]);
        let d1 = p.value.data()[0];
        p.grad.fill(1.0);
        adam.step(&mut [&mut p]);
        let d2 = p.value.data()[0] - d1;
        assert!(d2.abs() <= d1.abs() * 1.01);
    }

    #[test]
    fn step_count_is_per_call_not_per_param() {
        let mut a = param(vec![1.0], 0.3);
        let mut b = param(vec![2.0, 3.0], -0.2);
        let mut adam = AdamState::default();
        adam.step(&mut [&mut a, &mut b]);
        assert_eq!(adam.step_count, 1);
    }
}
