use serde::{Deserialize, Serialize};

/// Adam moment-decay and stability constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    /// One bias-corrected update with a single learning rate.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], hyper: &AdamHyper, lr: f64) {
        self.step_with(params, grads, hyper, |_| lr);
    }

    /// One update where parameter `i` uses learning rate `lr(i)`.
    pub fn step_with(&mut self, params: &mut [f64], grads: &[f64], hyper: &AdamHyper, lr: impl Fn(usize) -> f64) {
        assert_eq!(params.len(), self.m.len(), "parameter count changed");
        assert_eq!(grads.len(), self.m.len(), "gradient count differs from parameter count");
        self.t += 1;
        let bc1 = 1.0 - hyper.beta1.powi(self.t as i32);
        let bc2 = 1.0 - hyper.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = hyper.beta1 * self.m[i] + (1.0 - hyper.beta1) * g;
            self.v[i] = hyper.beta2 * self.v[i] + (1.0 - hyper.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr(i) * m_hat / (v_hat.sqrt() + hyper.eps);
        }
    }
}
