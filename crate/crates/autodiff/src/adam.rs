use crate::error::{AutodiffError, Result};
use crate::params::ParamSet;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    /// β₁ = 0.9, β₂ = 0.999, ε = 1e-8.
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    config: AdamConfig,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &ParamSet) -> Self {
        let zeros: Vec<Tensor> = params
            .tensors()
            .iter()
            .map(|t| Tensor::zeros(t.shape().to_vec()))
            .collect();
        Adam {
            config,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn config(&self) -> AdamConfig {
        self.config
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update in place. Nothing is modified if any gradient is
    /// non-finite or mis-shaped.
    pub fn step(&mut self, params: &mut ParamSet, grads: &[Tensor]) -> Result<()> {
        if grads.len() != params.len() || self.m.len() != params.len() {
            return Err(AutodiffError::mismatch(
                "adam",
                "parameter count",
                params.len(),
                grads.len(),
            ));
        }
        for ((name, p), g) in params.iter().zip(grads) {
            if p.shape() != g.shape() {
                return Err(AutodiffError::InvalidArgument {
                    op: "adam",
                    msg: format!(
                        "gradient for `{name}` has shape {:?}, expected {:?}",
                        g.shape(),
                        p.shape()
                    ),
                });
            }
            if !g.is_finite() {
                return Err(AutodiffError::NonFiniteGradient(name.to_string()));
            }
        }

        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powf(self.step as f64);
        let bc2 = 1.0 - beta2.powf(self.step as f64);
        for (((p, g), m), v) in params
            .tensors_mut()
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for (((p, &g), m), v) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }

    /// Optimizer state as named tensors, for checkpoints.
    pub fn state(&self, params: &ParamSet) -> ParamSet {
        let mut s = ParamSet::new();
        s.push("adam.step", Tensor::scalar(self.step as f64));
        s.push("adam.lr", Tensor::scalar(self.config.lr));
        s.push("adam.beta1", Tensor::scalar(self.config.beta1));
        s.push("adam.beta2", Tensor::scalar(self.config.beta2));
        s.push("adam.eps", Tensor::scalar(self.config.eps));
        for ((name, m), v) in params.names().iter().zip(&self.m).zip(&self.v) {
            s.push(format!("adam.m.{name}"), m.clone());
            s.push(format!("adam.v.{name}"), v.clone());
        }
        s
    }

    pub fn from_state(state: &ParamSet, params: &ParamSet) -> Result<Self> {
        let scalar = |n: &str| state.require(n).and_then(Tensor::item);
        let config = AdamConfig {
            lr: scalar("adam.lr")?,
            beta1: scalar("adam.beta1")?,
            beta2: scalar("adam.beta2")?,
            eps: scalar("adam.eps")?,
        };
        let step = scalar("adam.step")? as u64;
        let mut m = Vec::with_capacity(params.len());
        let mut v = Vec::with_capacity(params.len());
        for (name, p) in params.iter() {
            let mm = state.require(&format!("adam.m.{name}"))?;
            let vv = state.require(&format!("adam.v.{name}"))?;
            if mm.shape() != p.shape() || vv.shape() != p.shape() {
                return Err(AutodiffError::Format(format!("moment shape mismatch for `{name}`")));
            }
            m.push(mm.clone());
            v.push(vv.clone());
        }
        Ok(Adam { config, step, m, v })
    }
}
