use rand::Rng;
use serde::{Deserialize, Serialize};

use super::FlowError;
use crate::autograd::{Activation, Eval, Graph, Mlp, MlpParams};

/// Maps the raw conditioner output `s` to a positive scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScaleHead {
    /// `exp(tanh(s))`, bounded by `e`.
    TanhExp,
    /// `sigmoid(s) + eps`, bounded by `1 + eps`.
    Sigmoid { eps: f64 },
    /// `exp(s)`, unbounded.
    Exp,
}

impl Default for ScaleHead {
    fn default() -> Self {
        Self::TanhExp
    }
}

impl ScaleHead {
    pub fn lipschitz_bound(&self) -> f64 {
        match *self {
            Self::TanhExp => std::f64::consts::E,
            Self::Sigmoid { eps } => 1.0 + eps,
            Self::Exp => f64::INFINITY,
        }
    }
}

/// Maps the raw conditioner output to a shift.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftHead {
    #[default]
    Linear,
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    /// `x = z + μ(z_cond)` on the transformed coordinates.
    AdditiveCoupling,
    /// `x = σ(z_cond)·z + μ(z_cond)` on the transformed coordinates.
    AffineCoupling,
    /// `x_j = σ_j(z_{<j})·z_j + μ_j(z_{<j})`.
    MaskedAutoregressive,
    /// `x_j = σ_j(z_{<j})·z_j + (1 − σ_j(z_{<j}))·μ_j(z_{<j})`.
    InverseAutoregressive,
    /// `x_i = z_{perm[i]}`.
    Permutation,
}

/// Conditioner settings shared by the parameterised layer kinds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionerSpec {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub scale_head: ScaleHead,
    pub shift_head: ShiftHead,
}

impl Default for ConditionerSpec {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            activation: Activation::Tanh,
            scale_head: ScaleHead::TanhExp,
            shift_head: ShiftHead::Linear,
        }
    }
}

/// One invertible layer in generative orientation, `x = T(z)`.
///
/// Parameters of all conditioner networks are stored flat, network after
/// network, each in the [`Mlp`] layout.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowLayer {
    kind: LayerKind,
    dim: usize,
    // true = conditioned coordinate (coupling layers only)
    mask: Vec<bool>,
    perm: Vec<usize>,
    nets: Vec<Mlp>,
    scale_head: ScaleHead,
    shift_head: ShiftHead,
    params: Vec<f64>,
}

impl FlowLayer {
    /// Coupling layer conditioning on the first `⌊d/2⌋` coordinates.
    pub fn coupling<R: Rng + ?Sized>(
        kind: LayerKind,
        dim: usize,
        spec: &ConditionerSpec,
        rng: &mut R,
    ) -> Result<Self, FlowError> {
        let mask = (0..dim).map(|i| i < dim / 2).collect();
        Self::coupling_with_mask(kind, mask, spec, rng)
    }

    pub fn coupling_with_mask<R: Rng + ?Sized>(
        kind: LayerKind,
        mask: Vec<bool>,
        spec: &ConditionerSpec,
        rng: &mut R,
    ) -> Result<Self, FlowError> {
        if !matches!(kind, LayerKind::AdditiveCoupling | LayerKind::AffineCoupling) {
            return Err(FlowError::Config(format!("{kind:?} is not a coupling layer")));
        }
        let dim = mask.len();
        let m = mask.iter().filter(|c| **c).count();
        if m == dim {
            return Err(FlowError::Config("coupling mask leaves nothing to transform".into()));
        }
        let per = if kind == LayerKind::AffineCoupling { 2 } else { 1 };
        let net = net_shape(m, &spec.hidden, per * (dim - m), spec.activation)?;
        Self::assemble(kind, dim, mask, vec![net], spec, rng)
    }

    /// Autoregressive layer with one conditioner per coordinate.
    pub fn autoregressive<R: Rng + ?Sized>(
        kind: LayerKind,
        dim: usize,
        spec: &ConditionerSpec,
        rng: &mut R,
    ) -> Result<Self, FlowError> {
        if !matches!(kind, LayerKind::MaskedAutoregressive | LayerKind::InverseAutoregressive) {
            return Err(FlowError::Config(format!("{kind:?} is not autoregressive")));
        }
        if dim == 0 {
            return Err(FlowError::Config("dimension must be positive".into()));
        }
        let nets = (0..dim)
            .map(|j| net_shape(j, &spec.hidden, 2, spec.activation))
            .collect::<Result<Vec<_>, _>>()?;
        Self::assemble(kind, dim, vec![false; dim], nets, spec, rng)
    }

    pub fn permutation(perm: Vec<usize>) -> Result<Self, FlowError> {
        let dim = perm.len();
        let mut seen = vec![false; dim];
        for &p in &perm {
            if p >= dim || std::mem::replace(&mut seen[p], true) {
                return Err(FlowError::Config(format!("{perm:?} is not a permutation")));
            }
        }
        Ok(Self {
            kind: LayerKind::Permutation,
            dim,
            mask: vec![false; dim],
            perm,
            nets: Vec::new(),
            scale_head: ScaleHead::default(),
            shift_head: ShiftHead::default(),
            params: Vec::new(),
        })
    }

    /// Permutation that reverses coordinate order.
    pub fn reverse(dim: usize) -> Self {
        Self::permutation((0..dim).rev().collect()).expect("reversal is a permutation")
    }

    fn assemble<R: Rng + ?Sized>(
        kind: LayerKind,
        dim: usize,
        mask: Vec<bool>,
        nets: Vec<Mlp>,
        spec: &ConditionerSpec,
        rng: &mut R,
    ) -> Result<Self, FlowError> {
        let mut params = Vec::new();
        for net in &nets {
            // Hidden layers random, output layer zero: the layer starts as
            // the identity for the tanh-exp head.
            let mut p = MlpParams::random(net.clone(), 1.0, rng).params;
            for v in &mut p[net.output_layer_range()] {
                *v = 0.0;
            }
            params.extend(p);
        }
        Ok(Self {
            kind,
            dim,
            mask,
            perm: (0..dim).collect(),
            nets,
            scale_head: spec.scale_head,
            shift_head: spec.shift_head,
            params,
        })
    }

    /// Rebuilds a layer from its parts, validating shapes.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_parts(
        kind: LayerKind,
        mask: Vec<bool>,
        perm: Option<Vec<usize>>,
        sizes: Vec<Vec<usize>>,
        activation: Activation,
        scale_head: ScaleHead,
        shift_head: ShiftHead,
        params: Vec<f64>,
    ) -> Result<Self, FlowError> {
        let spec = ConditionerSpec { hidden: Vec::new(), activation, scale_head, shift_head };
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let mut layer = match kind {
            LayerKind::Permutation => {
                let perm = perm.ok_or_else(|| FlowError::Config("permutation layer without index map".into()))?;
                Self::permutation(perm)?
            }
            LayerKind::AdditiveCoupling | LayerKind::AffineCoupling => {
                Self::coupling_with_mask(kind, mask.clone(), &spec, &mut rng)?
            }
            LayerKind::MaskedAutoregressive | LayerKind::InverseAutoregressive => {
                Self::autoregressive(kind, mask.len(), &spec, &mut rng)?
            }
        };
        if kind != LayerKind::Permutation {
            let nets = sizes
                .into_iter()
                .map(|s| Mlp::new(s, activation))
                .collect::<Result<Vec<_>, _>>()?;
            if nets.len() != layer.nets.len()
                || nets.iter().zip(&layer.nets).any(|(a, b)| {
                    a.n_inputs() != b.n_inputs() || a.n_outputs() != b.n_outputs()
                })
            {
                return Err(FlowError::Config("conditioner shapes do not fit the layer".into()));
            }
            layer.nets = nets;
        }
        layer.set_params(&params)?;
        Ok(layer)
    }

    pub fn kind(&self) -> LayerKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn permutation_map(&self) -> &[usize] {
        &self.perm
    }

    pub fn nets(&self) -> &[Mlp] {
        &self.nets
    }

    pub fn scale_head(&self) -> ScaleHead {
        self.scale_head
    }

    pub fn shift_head(&self) -> ShiftHead {
        self.shift_head
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.nets.iter().map(Mlp::n_params).sum()
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<(), FlowError> {
        if params.len() != self.n_params() {
            return Err(FlowError::Shape(format!(
                "layer has {} parameters, got {}",
                self.n_params(),
                params.len()
            )));
        }
        self.params = params.to_vec();
        Ok(())
    }

    /// Supremum of the scale coefficient this layer can produce.
    pub fn lipschitz_scale_bound(&self) -> f64 {
        match self.kind {
            LayerKind::Permutation | LayerKind::AdditiveCoupling => 1.0,
            _ => self.scale_head.lipschitz_bound(),
        }
    }

    /// `x = T(z)` and `ln |det ∂x/∂z|`.
    pub fn forward(&self, z: &[f64]) -> Result<(Vec<f64>, f64), FlowError> {
        self.forward_on(&mut Eval, &self.params, z)
    }

    /// `z = T⁻¹(x)` and `ln |det ∂z/∂x|`.
    pub fn inverse(&self, x: &[f64]) -> Result<(Vec<f64>, f64), FlowError> {
        self.inverse_on(&mut Eval, &self.params, x)
    }

    pub fn forward_on<G: Graph>(
        &self,
        g: &mut G,
        params: &[G::Value],
        z: &[G::Value],
    ) -> Result<(Vec<G::Value>, G::Value), FlowError> {
        self.check(params.len(), z.len())?;
        match self.kind {
            LayerKind::Permutation => {
                let x = self.perm.iter().map(|&p| z[p]).collect();
                Ok((x, g.constant(0.0)))
            }
            LayerKind::AdditiveCoupling | LayerKind::AffineCoupling => self.coupling_pass(g, params, z, true),
            LayerKind::MaskedAutoregressive | LayerKind::InverseAutoregressive => {
                let mut x = Vec::with_capacity(self.dim);
                let mut terms = Vec::with_capacity(self.dim);
                let mut offset = 0;
                for (j, net) in self.nets.iter().enumerate() {
                    let p = &params[offset..offset + net.n_params()];
                    offset += net.n_params();
                    let out = net.forward(g, p, &z[..j])?;
                    let (xj, ld) = self.autoregressive_step(g, out[0], out[1], z[j], true);
                    x.push(xj);
                    terms.push(ld);
                }
                let ld = g.sum(&terms);
                Ok((x, ld))
            }
        }
    }

    pub fn inverse_on<G: Graph>(
        &self,
        g: &mut G,
        params: &[G::Value],
        x: &[G::Value],
    ) -> Result<(Vec<G::Value>, G::Value), FlowError> {
        self.check(params.len(), x.len())?;
        match self.kind {
            LayerKind::Permutation => {
                let mut z = x.to_vec();
                for (i, &p) in self.perm.iter().enumerate() {
                    z[p] = x[i];
                }
                Ok((z, g.constant(0.0)))
            }
            LayerKind::AdditiveCoupling | LayerKind::AffineCoupling => self.coupling_pass(g, params, x, false),
            LayerKind::MaskedAutoregressive | LayerKind::InverseAutoregressive => {
                // Sequential: the conditioner of z_j needs z_{<j}.
                let mut z: Vec<G::Value> = Vec::with_capacity(self.dim);
                let mut terms = Vec::with_capacity(self.dim);
                let mut offset = 0;
                for (j, net) in self.nets.iter().enumerate() {
                    let p = &params[offset..offset + net.n_params()];
                    offset += net.n_params();
                    let out = net.forward(g, p, &z[..j])?;
                    let (zj, ld) = self.autoregressive_step(g, out[0], out[1], x[j], false);
                    z.push(zj);
                    terms.push(ld);
                }
                let ld = g.sum(&terms);
                Ok((z, ld))
            }
        }
    }

    fn check(&self, n_params: usize, n_in: usize) -> Result<(), FlowError> {
        if n_in != self.dim {
            return Err(FlowError::Shape(format!("layer expects {} coordinates, got {n_in}", self.dim)));
        }
        if n_params != self.n_params() {
            return Err(FlowError::Shape(format!(
                "layer has {} parameters, got {n_params}",
                self.n_params()
            )));
        }
        Ok(())
    }

    fn coupling_pass<G: Graph>(
        &self,
        g: &mut G,
        params: &[G::Value],
        v: &[G::Value],
        forward: bool,
    ) -> Result<(Vec<G::Value>, G::Value), FlowError> {
        let cond: Vec<G::Value> = v.iter().zip(&self.mask).filter(|(_, c)| **c).map(|(x, _)| *x).collect();
        let out = self.nets[0].forward(g, params, &cond)?;
        let k = self.dim - cond.len();
        let mut res = v.to_vec();
        let mut terms = Vec::with_capacity(k);
        let transformed = self.mask.iter().enumerate().filter(|(_, c)| !**c).map(|(i, _)| i);
        for (t, i) in transformed.enumerate() {
            if self.kind == LayerKind::AdditiveCoupling {
                let mu = self.shift(g, out[t]);
                res[i] = if forward { g.add(v[i], mu) } else { g.sub(v[i], mu) };
            } else {
                let mu = self.shift(g, out[k + t]);
                let (r, ld) = self.affine(g, out[t], mu, v[i], forward);
                res[i] = r;
                terms.push(ld);
            }
        }
        let ld = if terms.is_empty() { g.constant(0.0) } else { g.sum(&terms) };
        Ok((res, ld))
    }

    fn autoregressive_step<G: Graph>(
        &self,
        g: &mut G,
        raw_scale: G::Value,
        raw_shift: G::Value,
        v: G::Value,
        forward: bool,
    ) -> (G::Value, G::Value) {
        let mu = self.shift(g, raw_shift);
        if self.kind == LayerKind::InverseAutoregressive {
            // (1 − σ)·μ with σ from the scale head
            let (scale, _) = self.scale(g, raw_scale);
            let sm = g.mul(scale, mu);
            let shift = g.sub(mu, sm);
            self.affine(g, raw_scale, shift, v, forward)
        } else {
            self.affine(g, raw_scale, mu, v, forward)
        }
    }

    fn shift<G: Graph>(&self, g: &mut G, raw: G::Value) -> G::Value {
        match self.shift_head {
            ShiftHead::Linear => raw,
            ShiftHead::Relu => g.relu(raw),
        }
    }

    // (scale, ln scale)
    fn scale<G: Graph>(&self, g: &mut G, raw: G::Value) -> (G::Value, G::Value) {
        match self.scale_head {
            ScaleHead::TanhExp => {
                let l = g.tanh(raw);
                (g.exp(l), l)
            }
            ScaleHead::Exp => (g.exp(raw), raw),
            ScaleHead::Sigmoid { eps } => {
                let s = g.sigmoid(raw);
                let s = g.add_const(s, eps);
                (s, g.ln(s))
            }
        }
    }

    // Forward: σ·v + μ, +ln σ. Inverse: (v − μ)/σ, −ln σ.
    fn affine<G: Graph>(
        &self,
        g: &mut G,
        raw_scale: G::Value,
        mu: G::Value,
        v: G::Value,
        forward: bool,
    ) -> (G::Value, G::Value) {
        if forward {
            let (s, ls) = self.scale(g, raw_scale);
            let sv = g.mul(s, v);
            (g.add(sv, mu), ls)
        } else {
            let d = g.sub(v, mu);
            match self.scale_head {
                ScaleHead::TanhExp | ScaleHead::Exp => {
                    let l = if self.scale_head == ScaleHead::TanhExp { g.tanh(raw_scale) } else { raw_scale };
                    let nl = g.neg(l);
                    let inv = g.exp(nl);
                    (g.mul(d, inv), nl)
                }
                ScaleHead::Sigmoid { .. } => {
                    let (s, ls) = self.scale(g, raw_scale);
                    (g.div(d, s), g.neg(ls))
                }
            }
        }
    }
}

fn net_shape(n_in: usize, hidden: &[usize], n_out: usize, activation: Activation) -> Result<Mlp, FlowError> {
    let mut sizes = Vec::with_capacity(hidden.len() + 2);
    sizes.push(n_in);
    sizes.extend_from_slice(hidden);
    sizes.push(n_out);
    Ok(Mlp::new(sizes, activation)?)
}
