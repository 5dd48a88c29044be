use serde::{Deserialize, Serialize};

use super::{Scalar, Tensor, TensorError};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            ..AdamConfig::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment estimates for an ordered list of parameters.
#[derive(Clone, Debug)]
pub struct AdamState<F> {
    pub config: AdamConfig,
    m: Vec<Vec<F>>,
    v: Vec<Vec<F>>,
    t: u64,
}

impl<F: Scalar> AdamState<F> {
    pub fn new(config: AdamConfig) -> Self {
        AdamState {
            config,
            m: Vec::new(),
            v: Vec::new(),
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn second_moments(&self) -> &[Vec<F>] {
        &self.v
    }

    /// One bias-corrected Adam update. Parameters must be passed in the same
    /// order on every call. Gradients are cleared afterwards.
    pub fn step(&mut self, params: &mut [(&str, &mut Tensor<F>)]) -> Result<(), TensorError> {
        if let Some((name, _)) = params.iter().find(|(_, p)| p.grad().is_none()) {
            return Err(TensorError::MissingGrad((*name).to_owned()));
        }
        if self.m.is_empty() {
            self.m = params
                .iter()
                .map(|(_, p)| vec![F::zero(); p.len()])
                .collect();
            self.v = self.m.clone();
        }
        if self.m.len() != params.len()
            || self
                .m
                .iter()
                .zip(params.iter())
                .any(|(m, (_, p))| m.len() != p.len())
        {
            return Err(TensorError::Invalid {
                op: "adam_step",
                message: "parameter list changed between steps".into(),
            });
        }

        self.t += 1;
        let c = &self.config;
        let t = i32::try_from(self.t).unwrap_or(i32::MAX);
        let beta1 = F::from_f64_lossy(c.beta1);
        let beta2 = F::from_f64_lossy(c.beta2);
        let one = F::one();
        let bc1 = one - beta1.powi(t);
        let bc2 = one - beta2.powi(t);
        let lr = F::from_f64_lossy(c.lr);
        let eps = F::from_f64_lossy(c.epsilon);

        for ((_, param), (m, v)) in params
            .iter_mut()
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            let grad = param.grad().expect("checked above").to_vec();
            for (((w, g), mi), vi) in param
                .data_mut()
                .iter_mut()
                .zip(&grad)
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *mi = beta1 * *mi + (one - beta1) * *g;
                *vi = beta2 * *vi + (one - beta2) * *g * *g;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
            param.clear_grad();
        }
        Ok(())
    }
}
