use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::{Eval, Graph};
use super::AutogradError;

/// Hidden-layer nonlinearity. The output layer is always linear.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Sigmoid,
    Relu,
}

impl Activation {
    fn apply<G: Graph>(self, g: &mut G, x: G::Value) -> G::Value {
        match self {
            Activation::Tanh => g.tanh(x),
            Activation::Sigmoid => g.sigmoid(x),
            Activation::Relu => g.relu(x),
        }
    }
}

/// Shape of a fully connected network: layer sizes `[n_in, h₁, …, n_out]`.
///
/// Flattened parameter layout, layer by layer: the `n_out × n_in` weight
/// matrix in row-major order, then the `n_out` biases.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    activation: Activation,
}

impl Mlp {
    pub fn new(sizes: Vec<usize>, activation: Activation) -> Result<Self, AutogradError> {
        if sizes.len() < 2 || sizes[1..].contains(&0) {
            return Err(AutogradError::Shape(format!("invalid layer sizes {sizes:?}")));
        }
        Ok(Self { sizes, activation })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn n_inputs(&self) -> usize {
        self.sizes[0]
    }

    pub fn n_outputs(&self) -> usize {
        *self.sizes.last().expect("at least two sizes")
    }

    /// Σ (n_in + 1) · n_out over layers.
    pub fn n_params(&self) -> usize {
        self.sizes.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
    }

    /// Records the network on `g`. `params` must follow the flattened layout.
    pub fn forward<G: Graph>(
        &self,
        g: &mut G,
        params: &[G::Value],
        input: &[G::Value],
    ) -> Result<Vec<G::Value>, AutogradError> {
        if input.len() != self.n_inputs() {
            return Err(AutogradError::Shape(format!(
                "input has {} entries, network expects {}",
                input.len(),
                self.n_inputs()
            )));
        }
        if params.len() != self.n_params() {
            return Err(AutogradError::Shape(format!(
                "{} parameters given, network has {}",
                params.len(),
                self.n_params()
            )));
        }
        let n_layers = self.sizes.len() - 1;
        let mut h: Vec<G::Value> = input.to_vec();
        let mut offset = 0;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &params[offset..offset + n_in * n_out];
            let biases = &params[offset + n_in * n_out..offset + (n_in + 1) * n_out];
            offset += (n_in + 1) * n_out;
            let mut next = Vec::with_capacity(n_out);
            for o in 0..n_out {
                let pre = g.affine(biases[o], &weights[o * n_in..(o + 1) * n_in], &h);
                next.push(if l + 1 < n_layers { self.activation.apply(g, pre) } else { pre });
            }
            h = next;
        }
        Ok(h)
    }

    /// Range of the final layer's parameters within the flat layout.
    pub fn output_layer_range(&self) -> std::ops::Range<usize> {
        let n = self.sizes.len();
        let last = (self.sizes[n - 2] + 1) * self.sizes[n - 1];
        self.n_params() - last..self.n_params()
    }
}

/// A network shape together with its flattened parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub mlp: Mlp,
    pub params: Vec<f64>,
}

impl MlpParams {
    pub fn zeros(mlp: Mlp) -> Self {
        let params = vec![0.0; mlp.n_params()];
        Self { mlp, params }
    }

    /// Uniform Glorot-style initialization; biases start at zero.
    pub fn random<R: Rng + ?Sized>(mlp: Mlp, gain: f64, rng: &mut R) -> Self {
        let mut params = Vec::with_capacity(mlp.n_params());
        for w in mlp.sizes.windows(2) {
            let (n_in, n_out) = (w[0], w[1]);
            let bound = gain * (6.0 / (n_in + n_out) as f64).sqrt();
            for _ in 0..n_in * n_out {
                params.push(rng.random_range(-bound..=bound));
            }
            params.extend(std::iter::repeat_n(0.0, n_out));
        }
        Self { mlp, params }
    }

    pub fn unflatten(mlp: Mlp, flat: &[f64]) -> Result<Self, AutogradError> {
        if flat.len() != mlp.n_params() {
            return Err(AutogradError::Shape(format!(
                "{} values cannot fill a network with {} parameters",
                flat.len(),
                mlp.n_params()
            )));
        }
        Ok(Self { mlp, params: flat.to_vec() })
    }

    pub fn flatten(&self) -> &[f64] {
        &self.params
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, AutogradError> {
        self.mlp.forward(&mut Eval, &self.params, input)
    }
}
