//! Adam optimizer with bias correction.

use crate::error::{Error, Result};
use crate::nn::tensor::{Parameter, Tensor};

/// Per-parameter first/second moment accumulators plus the step count.
/// Defaults match the Keras Adam configuration (epsilon 1e-7).
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub epsilon: f32,
    step: u64,
    moments: Vec<(Tensor, Tensor)>,
}

impl Adam {
    pub fn new(learning_rate: f32) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
            step: 0,
            moments: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update over `params`, which must arrive in the
    /// same order every call. Non-trainable parameters are untouched.
    pub fn step(&mut self, params: &mut [&mut Parameter]) -> Result<()> {
        if self.moments.is_empty() {
            self.moments = params
                .iter()
                .map(|p| (Tensor::zeros(p.value.shape()), Tensor::zeros(p.value.shape())))
                .collect();
        }
        if self.moments.len() != params.len() {
            return Err(Error::Training(format!(
                "optimizer tracks {} parameters, got {}",
                self.moments.len(),
                params.len()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let bias1 = 1.0 - self.beta1.powi(t);
        let bias2 = 1.0 - self.beta2.powi(t);

        for (param, (m, v)) in params.iter_mut().zip(&mut self.moments) {
            if m.shape() != param.value.shape() {
                return Err(Error::Training(format!(
                    "parameter {} changed shape: {:?} vs moment {:?}",
                    param.name,
                    param.value.shape(),
                    m.shape()
                )));
            }
            if !param.trainable {
                continue;
            }
            let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.learning_rate, self.epsilon);
            for i in 0..param.value.len() {
                let g = param.grad.data()[i];
                let mi = b1 * m.data()[i] + (1.0 - b1) * g;
                let vi = b2 * v.data()[i] + (1.0 - b2) * g * g;
                m.data_mut()[i] = mi;
                v.data_mut()[i] = vi;
                let m_hat = mi / bias1;
                let v_hat = vi / bias2;
                param.value.data_mut()[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameter_unchanged() {
        let mut p = Parameter::new("w", Tensor::from_vec(&[2], vec![1.5, -0.5]).unwrap());
        let before = p.value.clone();
        let mut adam = Adam::new(0.001);
        adam.step(&mut [&mut p]).unwrap();
        assert_eq!(p.value, before);
    }

    #[test]
    fn first_step_is_signed_learning_rate() {
        let mut p = Parameter::new("w", Tensor::from_vec(&[3], vec![1.0, 1.0, 1.0]).unwrap());
        p.grad = Tensor::from_vec(&[3], vec![0.3, -2.0, 0.0]).unwrap();
        let mut adam = Adam::new(0.001);
        adam.step(&mut [&mut p]).unwrap();
        // first step: m_hat = g, v_hat = g^2, update = -lr * g/(|g|+eps)
        assert!((p.value.data()[0] - (1.0 - 0.001)).abs() < 1e-5);
        assert!((p.value.data()[1] - (1.0 + 0.001)).abs() < 1e-5);
        assert_eq!(p.value.data()[2], 1.0);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn quadratic_descent_converges() {
        // minimize f(x) = x^2 from x = 1 at lr 0.1
        let mut p = Parameter::new("x", Tensor::from_vec(&[1], vec![1.0]).unwrap());
        let mut adam = Adam::new(0.1);
        for _ in 0..100 {
            let x = p.value.data()[0];
            p.grad = Tensor::from_vec(&[1], vec![2.0 * x]).unwrap();
            adam.step(&mut [&mut p]).unwrap();
        }
        assert!(p.value.data()[0].abs() < 0.1, "x = {}", p.value.data()[0]);
    }

    #[test]
    fn non_trainable_parameter_bitwise_unchanged() {
        let mut p = Parameter::new("frozen", Tensor::from_vec(&[2], vec![0.25, -7.5]).unwrap());
        p.trainable = false;
        p.grad = Tensor::from_vec(&[2], vec![5.0, 5.0]).unwrap();
        let before: Vec<u32> = p.value.data().iter().map(|v| v.to_bits()).collect();
        let mut adam = Adam::new(0.1);
        for _ in 0..10 {
            adam.step(&mut [&mut p]).unwrap();
        }
        let after: Vec<u32> = p.value.data().iter().map(|v| v.to_bits()).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn parameter_count_must_stay_stable() {
        let mut a = Parameter::new("a", Tensor::zeros(&[2]));
        let mut b = Parameter::new("b", Tensor::zeros(&[2]));
        let mut adam = Adam::new(0.001);
        adam.step(&mut [&mut a, &mut b]).unwrap();
        assert!(adam.step(&mut [&mut a]).is_err());
    }
}
