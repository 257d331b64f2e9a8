use crate::element::Element;
use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam with bias-corrected moment estimates. Moments start at zero and are
/// kept per parameter in the order the parameters were registered.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    config: AdamConfig,
    first_moment: Vec<Tensor<T>>,
    second_moment: Vec<Tensor<T>>,
    step_count: u64,
}

impl<T: Element> Adam<T> {
    pub fn new<'a>(config: AdamConfig, params: impl IntoIterator<Item = &'a Tensor<T>>) -> Self {
        let first_moment: Vec<_> = params.into_iter().map(|p| Tensor::zeros(p.shape())).collect();
        let second_moment = first_moment.clone();
        Adam {
            config,
            first_moment,
            second_moment,
            step_count: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn config(&self) -> AdamConfig {
        self.config
    }

    /// One update of every parameter from its gradient.
    pub fn step(&mut self, params: &mut [Tensor<T>], grads: &[&Tensor<T>], lr: f64) -> Result<()> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(TensorError::Config(format!("learning rate {lr} must be positive")));
        }
        if params.len() != self.first_moment.len() || grads.len() != params.len() {
            return Err(TensorError::Contract(format!(
                "adam tracks {} parameters, got {} params and {} grads",
                self.first_moment.len(),
                params.len(),
                grads.len()
            )));
        }
        for (p, g) in params.iter().zip(grads) {
            if p.shape() != g.shape() {
                return Err(TensorError::shape("adam_step", p.shape(), g.shape()));
            }
        }
        for (p, m) in params.iter().zip(&self.first_moment) {
            if p.shape() != m.shape() {
                return Err(TensorError::shape("adam_step", p.shape(), m.shape()));
            }
        }

        self.step_count += 1;
        let AdamConfig {
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step_count as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let (b1, b2) = (T::from_f64_lossy(beta1), T::from_f64_lossy(beta2));
        let (one_b1, one_b2) = (T::from_f64_lossy(1.0 - beta1), T::from_f64_lossy(1.0 - beta2));
        let step = T::from_f64_lossy(lr / c1);
        let inv_c2 = T::from_f64_lossy(1.0 / c2);
        let eps = T::from_f64_lossy(epsilon);

        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first_moment.iter_mut().zip(self.second_moment.iter_mut()))
        {
            for (((w, &gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mi = b1 * *mi + one_b1 * gi;
                *vi = b2 * *vi + one_b2 * gi * gi;
                *w = *w - step * *mi / ((*vi * inv_c2).sqrt() + eps);
            }
        }
        Ok(())
    }
}
