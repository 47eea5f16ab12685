//! Affine triangular flows.
//!
//! Layers are stored in generative orientation, `x = T(z)` with `z` drawn from
//! the source. Density evaluation runs the inverse pass and adds the inverse
//! log-determinants to the source log-density:
//!
//! `ln q(x) = ln p(T⁻¹(x)) + Σ_layers ln |det ∂T_k⁻¹|`.
//!
//! ```
//! use tailflow::flow::{FlowModel, FlowStack, Source};
//!
//! let model = FlowModel::new(FlowStack::new(2), Source::gaussian(2)).unwrap();
//! let lp = model.log_prob(&[0.0, 0.0]).unwrap();
//! assert!((lp + 1.837877).abs() < 1e-6);
//! ```

pub mod hexfloat;
mod layer;
mod source;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autograd::{Activation, AutogradError, Eval, Graph};
use crate::dists::{DistError, Distribution1D, IidSource};

pub use layer::{ConditionerSpec, FlowLayer, LayerKind, ScaleHead, ShiftHead};
pub use source::{Source, TafSource, DEFAULT_NU, THETA_CAUCHY};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid flow configuration: {0}")]
    Config(String),
    #[error("non-finite value produced by layer {layer}")]
    NonFinite { layer: usize },
    #[error("malformed model document: {0}")]
    Format(String),
    #[error(transparent)]
    Autograd(#[from] AutogradError),
    #[error(transparent)]
    Dist(#[from] DistError),
}

/// An ordered composition of layers of a common dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowStack {
    dim: usize,
    layers: Vec<FlowLayer>,
}

impl FlowStack {
    /// Empty stack: the identity map.
    pub fn new(dim: usize) -> Self {
        Self { dim, layers: Vec::new() }
    }

    /// `blocks` repetitions of one parameterised layer followed by a
    /// coordinate reversal.
    pub fn blocks<R: Rng + ?Sized>(
        dim: usize,
        blocks: usize,
        kind: LayerKind,
        spec: &ConditionerSpec,
        rng: &mut R,
    ) -> Result<Self, FlowError> {
        let mut stack = Self::new(dim);
        for _ in 0..blocks {
            let layer = match kind {
                LayerKind::AdditiveCoupling | LayerKind::AffineCoupling => FlowLayer::coupling(kind, dim, spec, rng)?,
                LayerKind::MaskedAutoregressive | LayerKind::InverseAutoregressive => {
                    FlowLayer::autoregressive(kind, dim, spec, rng)?
                }
                LayerKind::Permutation => {
                    return Err(FlowError::Config("blocks need a parameterised layer kind".into()))
                }
            };
            stack.push(layer)?;
            stack.push(FlowLayer::reverse(dim))?;
        }
        Ok(stack)
    }

    pub fn push(&mut self, layer: FlowLayer) -> Result<(), FlowError> {
        if layer.dim() != self.dim {
            return Err(FlowError::Shape(format!(
                "layer of dimension {} in a stack of dimension {}",
                layer.dim(),
                self.dim
            )));
        }
        self.layers.push(layer);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn layers(&self) -> &[FlowLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [FlowLayer] {
        &mut self.layers
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(FlowLayer::n_params).sum()
    }

    /// All layer parameters, layer after layer.
    pub fn params(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.params().iter().copied()).collect()
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<(), FlowError> {
        if params.len() != self.n_params() {
            return Err(FlowError::Shape(format!("stack has {} parameters, got {}", self.n_params(), params.len())));
        }
        let mut offset = 0;
        for l in &mut self.layers {
            let n = l.n_params();
            l.set_params(&params[offset..offset + n])?;
            offset += n;
        }
        Ok(())
    }

    /// Architectural bound on the scale coefficient of each layer.
    pub fn lipschitz_scale_bounds(&self) -> Vec<f64> {
        self.layers.iter().map(FlowLayer::lipschitz_scale_bound).collect()
    }

    pub fn forward(&self, z: &[f64]) -> Result<(Vec<f64>, f64), FlowError> {
        self.forward_on(&mut Eval, &self.params(), z)
    }

    pub fn inverse(&self, x: &[f64]) -> Result<(Vec<f64>, f64), FlowError> {
        self.inverse_on(&mut Eval, &self.params(), x)
    }

    pub fn forward_on<G: Graph>(
        &self,
        g: &mut G,
        params: &[G::Value],
        z: &[G::Value],
    ) -> Result<(Vec<G::Value>, G::Value), FlowError> {
        self.check(params.len(), z.len())?;
        let mut v = z.to_vec();
        let mut terms = Vec::with_capacity(self.layers.len());
        let mut offset = 0;
        for (k, layer) in self.layers.iter().enumerate() {
            let n = layer.n_params();
            let (out, ld) = layer.forward_on(g, &params[offset..offset + n], &v)?;
            offset += n;
            check_finite(g, &out, ld, k)?;
            v = out;
            terms.push(ld);
        }
        let ld = if terms.is_empty() { g.constant(0.0) } else { g.sum(&terms) };
        Ok((v, ld))
    }

    pub fn inverse_on<G: Graph>(
        &self,
        g: &mut G,
        params: &[G::Value],
        x: &[G::Value],
    ) -> Result<(Vec<G::Value>, G::Value), FlowError> {
        self.check(params.len(), x.len())?;
        let mut v = x.to_vec();
        let mut terms = Vec::with_capacity(self.layers.len());
        let mut end = params.len();
        for (k, layer) in self.layers.iter().enumerate().rev() {
            let n = layer.n_params();
            let (out, ld) = layer.inverse_on(g, &params[end - n..end], &v)?;
            end -= n;
            check_finite(g, &out, ld, k)?;
            v = out;
            terms.push(ld);
        }
        let ld = if terms.is_empty() { g.constant(0.0) } else { g.sum(&terms) };
        Ok((v, ld))
    }

    fn check(&self, n_params: usize, n_in: usize) -> Result<(), FlowError> {
        if n_in != self.dim {
            return Err(FlowError::Shape(format!("stack expects {} coordinates, got {n_in}", self.dim)));
        }
        if n_params != self.n_params() {
            return Err(FlowError::Shape(format!("stack has {} parameters, got {n_params}", self.n_params())));
        }
        Ok(())
    }
}

fn check_finite<G: Graph>(g: &G, out: &[G::Value], ld: G::Value, layer: usize) -> Result<(), FlowError> {
    if g.value(ld).is_finite() && out.iter().all(|v| g.value(*v).is_finite()) {
        Ok(())
    } else {
        Err(FlowError::NonFinite { layer })
    }
}

/// A stack together with its source law.
///
/// The flat parameter vector is the stack parameters followed by the source
/// parameters (`θ` for the tail-adaptive source).
#[derive(Debug, Clone, PartialEq)]
pub struct FlowModel {
    pub stack: FlowStack,
    pub source: Source,
}

impl FlowModel {
    pub fn new(stack: FlowStack, source: Source) -> Result<Self, FlowError> {
        if stack.dim() != source.dim() {
            return Err(FlowError::Shape(format!(
                "stack dimension {} differs from source dimension {}",
                stack.dim(),
                source.dim()
            )));
        }
        Ok(Self { stack, source })
    }

    pub fn dim(&self) -> usize {
        self.stack.dim()
    }

    pub fn n_params(&self) -> usize {
        self.stack.n_params() + self.source.n_params()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = self.stack.params();
        p.extend(self.source.params());
        p
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<(), FlowError> {
        if params.len() != self.n_params() {
            return Err(FlowError::Shape(format!("model has {} parameters, got {}", self.n_params(), params.len())));
        }
        let n = self.stack.n_params();
        self.stack.set_params(&params[..n])?;
        self.source.set_params(&params[n..])
    }

    pub fn log_prob(&self, x: &[f64]) -> Result<f64, FlowError> {
        self.log_prob_on(&mut Eval, &self.params(), x)
    }

    /// `ln q(x)` recorded on `g` with the model parameters given as graph
    /// values.
    pub fn log_prob_on<G: Graph>(&self, g: &mut G, params: &[G::Value], x: &[f64]) -> Result<G::Value, FlowError> {
        if params.len() != self.n_params() {
            return Err(FlowError::Shape(format!("model has {} parameters, got {}", self.n_params(), params.len())));
        }
        let n = self.stack.n_params();
        let xs: Vec<G::Value> = x.iter().map(|&v| g.constant(v)).collect();
        let (z, ld) = self.stack.inverse_on(g, &params[..n], &xs)?;
        let lp = self.source.log_prob_on(g, &params[n..], &z);
        Ok(g.add(lp, ld))
    }

    /// `n` draws pushed through the stack; deterministic per seed.
    pub fn sample(&self, seed: u64, n: usize) -> Result<Array2<f64>, FlowError> {
        let mut z = self.source.sample(seed, n);
        let params = self.stack.params();
        for mut row in z.rows_mut() {
            let (x, _) = self.stack.forward_on(&mut Eval, &params, row.as_slice().expect("standard layout"))?;
            row.iter_mut().zip(x).for_each(|(r, v)| *r = v);
        }
        Ok(z)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ModelDoc::from_model(self)).expect("model documents serialise")
    }

    pub fn from_json(s: &str) -> Result<Self, FlowError> {
        let doc: ModelDoc = serde_json::from_str(s).map_err(|e| FlowError::Format(e.to_string()))?;
        doc.into_model()
    }
}

/// `ln q(x)` for a stack over a source.
pub fn flow_log_prob(stack: &FlowStack, source: &Source, x: &[f64]) -> Result<f64, FlowError> {
    let mut params = stack.params();
    params.extend(source.params());
    let model = FlowModel::new(stack.clone(), *source)?;
    model.log_prob_on(&mut Eval, &params, x)
}

/// `n` source draws pushed through `stack`.
pub fn flow_sample(stack: &FlowStack, source: &Source, seed: u64, n: usize) -> Result<Array2<f64>, FlowError> {
    FlowModel::new(stack.clone(), *source)?.sample(seed, n)
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelDoc {
    dim: usize,
    layers: Vec<LayerDoc>,
    source: SourceDoc,
}

#[derive(Debug, Serialize, Deserialize)]
struct LayerDoc {
    kind: LayerKind,
    mask: Vec<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    permutation: Option<Vec<usize>>,
    layer_sizes: Vec<Vec<usize>>,
    activation: Activation,
    scale_head: ScaleHead,
    shift_head: ShiftHead,
    params: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum SourceDoc {
    Fixed { base: Distribution1D },
    Taf { theta: String },
}

impl ModelDoc {
    fn from_model(m: &FlowModel) -> Self {
        let layers = m
            .stack
            .layers()
            .iter()
            .map(|l| LayerDoc {
                kind: l.kind(),
                mask: l.mask().to_vec(),
                permutation: (l.kind() == LayerKind::Permutation).then(|| l.permutation_map().to_vec()),
                layer_sizes: l.nets().iter().map(|n| n.sizes().to_vec()).collect(),
                activation: l.nets().first().map_or(Activation::Tanh, |n| n.activation()),
                scale_head: l.scale_head(),
                shift_head: l.shift_head(),
                params: l.params().iter().map(|&v| hexfloat::encode(v)).collect(),
            })
            .collect();
        let source = match m.source {
            Source::Fixed(s) => SourceDoc::Fixed { base: s.base },
            Source::TailAdaptive(s) => SourceDoc::Taf { theta: hexfloat::encode(s.theta) },
        };
        Self { dim: m.dim(), layers, source }
    }

    fn into_model(self) -> Result<FlowModel, FlowError> {
        let mut stack = FlowStack::new(self.dim);
        for (k, l) in self.layers.into_iter().enumerate() {
            let params = l
                .params
                .iter()
                .map(|s| hexfloat::decode(s).ok_or_else(|| FlowError::Format(format!("layer {k}: bad number {s:?}"))))
                .collect::<Result<Vec<_>, _>>()?;
            let layer = FlowLayer::from_parts(
                l.kind,
                l.mask,
                l.permutation,
                l.layer_sizes,
                l.activation,
                l.scale_head,
                l.shift_head,
                params,
            )?;
            stack.push(layer)?;
        }
        let source = match self.source {
            SourceDoc::Fixed { base } => Source::Fixed(IidSource::new(self.dim, base)?),
            SourceDoc::Taf { theta } => Source::TailAdaptive(TafSource {
                theta: hexfloat::decode(&theta).ok_or_else(|| FlowError::Format(format!("bad theta {theta:?}")))?,
                dim: self.dim,
            }),
        };
        FlowModel::new(stack, source)
    }
}
