use super::precision::Arithmetic;
use super::tensor::Tensor;
use crate::error::{bail, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam with bias correction. Moments are allocated on the first step and
/// must stay shape-congruent with the parameter list afterwards.
#[derive(Debug, Clone)]
pub struct AdamState {
    config: AdamConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    storage: Arithmetic,
}

impl AdamState {
    pub fn new(config: AdamConfig, storage: Arithmetic) -> Result<Self> {
        let AdamConfig {
            lr,
            beta1,
            beta2,
            epsilon,
        } = config;
        if !(lr > 0.0 && lr.is_finite()) {
            bail!(Config, "learning rate must be positive, got {lr}");
        }
        for (name, b) in [("beta1", beta1), ("beta2", beta2)] {
            if !(b > 0.0 && b < 1.0) {
                bail!(Config, "{name} must lie in (0, 1), got {b}");
            }
        }
        if !(epsilon > 0.0) {
            bail!(Config, "epsilon must be positive, got {epsilon}");
        }
        Ok(Self {
            config,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
            storage,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn first_moments(&self) -> &[Vec<f64>] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Vec<f64>] {
        &self.v
    }

    /// Applies one update using each tensor's stored gradient (absent
    /// gradients count as zero). Nothing is modified if any gradient is
    /// non-finite.
    pub fn apply<'a, I>(&mut self, params: I) -> Result<()>
    where
        I: IntoIterator<Item = (&'a str, &'a mut Tensor)>,
    {
        let mut params: Vec<(&str, &mut Tensor)> = params.into_iter().collect();
        if self.m.is_empty() {
            self.m = params.iter().map(|(_, t)| vec![0.0; t.len()]).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != params.len() {
            bail!(
                Dimension,
                "optimizer tracks {} parameters, got {}",
                self.m.len(),
                params.len()
            );
        }
        for ((name, t), m) in params.iter().zip(&self.m) {
            if t.len() != m.len() {
                bail!(
                    Dimension,
                    "parameter '{name}' has {} values, optimizer state has {}",
                    t.len(),
                    m.len()
                );
            }
            if let Some(g) = t.grad() {
                if let Some(i) = g.iter().position(|x| !x.is_finite()) {
                    bail!(
                        Training,
                        "non-finite gradient {} in parameter '{name}' at index {i}",
                        g[i]
                    );
                }
            }
        }

        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step as i32;
        let bias1 = 1.0 - beta1.powi(t);
        let bias2 = 1.0 - beta2.powi(t);
        let storage = self.storage;
        for (((_, param), m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let Some(grad) = param.grad().map(<[f64]>::to_vec) else {
                for (mi, vi) in m.iter_mut().zip(v.iter_mut()) {
                    *mi = storage.round(beta1 * *mi);
                    *vi = storage.round(beta2 * *vi);
                }
                continue;
            };
            let values = param.data_mut();
            for i in 0..values.len() {
                let g = grad[i];
                m[i] = storage.round(beta1 * m[i] + (1.0 - beta1) * g);
                v[i] = storage.round(beta2 * v[i] + (1.0 - beta2) * g * g);
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                values[i] = storage.round(values[i] - lr * m_hat / (v_hat.sqrt() + epsilon));
            }
        }
        Ok(())
    }
}
