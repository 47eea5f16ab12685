use std::f64::consts::PI;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::FlowError;
use crate::autograd::{softplus, softplus_inverse, Graph};
use crate::dists::{DistError, Distribution1D, IidSource};

/// `θ` below which `ν = 1 + softplus(θ)` is exactly one in `f64`.
pub const THETA_CAUCHY: f64 = -1000.0;

/// Default initial degrees of freedom of the tail-adaptive source.
pub const DEFAULT_NU: f64 = 30.0;

/// Product of `d` standard student-t laws with learnable `ν = 1 + softplus(θ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TafSource {
    pub theta: f64,
    pub dim: usize,
}

impl TafSource {
    /// Source with the given degrees of freedom; `ν = 1` is the Cauchy
    /// product.
    pub fn with_nu(nu: f64, dim: usize) -> Result<Self, FlowError> {
        if !(nu >= 1.0 && nu.is_finite()) {
            return Err(DistError::Domain { what: "degrees of freedom", range: "[1, ∞)", value: nu }.into());
        }
        let theta = if nu == 1.0 { THETA_CAUCHY } else { softplus_inverse(nu - 1.0) };
        Ok(Self { theta, dim })
    }

    pub fn nu(&self) -> f64 {
        1.0 + softplus(self.theta)
    }

    /// `ln p_ν(z)` with `θ` as a graph value.
    pub fn log_prob_on<G: Graph>(g: &mut G, theta: G::Value, z: &[G::Value]) -> G::Value {
        let d = z.len() as f64;
        let sp = g.softplus(theta);
        let nu = g.add_const(sp, 1.0);
        let half_nu = g.scale(nu, 0.5);
        let half_nu1 = g.add_const(half_nu, 0.5);
        let lg1 = g.lgamma(half_nu1);
        let lg0 = g.lgamma(half_nu);
        let ln_nu_pi = {
            let s = g.scale(nu, PI);
            g.ln(s)
        };
        let mut kernel = Vec::with_capacity(z.len());
        for &zj in z {
            let sq = g.square(zj);
            let r = g.div(sq, nu);
            let r1 = g.add_const(r, 1.0);
            kernel.push(g.ln(r1));
        }
        let k = g.sum(&kernel);
        let wk = g.mul(half_nu1, k);
        let a = g.sub(lg1, lg0);
        let a = g.scale(a, d);
        let b = g.scale(ln_nu_pi, 0.5 * d);
        let norm = g.sub(a, b);
        g.sub(norm, wk)
    }
}

/// Base law of a flow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Source {
    Fixed(IidSource),
    TailAdaptive(TafSource),
}

impl Source {
    pub fn gaussian(dim: usize) -> Self {
        Self::Fixed(IidSource::standard_gaussian(dim))
    }

    pub fn tail_adaptive(dim: usize) -> Self {
        Self::TailAdaptive(TafSource::with_nu(DEFAULT_NU, dim).expect("default ν is valid"))
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Fixed(s) => s.dim,
            Self::TailAdaptive(s) => s.dim,
        }
    }

    /// Trainable source parameters: `[θ]` for the tail-adaptive source.
    pub fn params(&self) -> Vec<f64> {
        match self {
            Self::Fixed(_) => Vec::new(),
            Self::TailAdaptive(s) => vec![s.theta],
        }
    }

    pub fn n_params(&self) -> usize {
        match self {
            Self::Fixed(_) => 0,
            Self::TailAdaptive(_) => 1,
        }
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<(), FlowError> {
        if p.len() != self.n_params() {
            return Err(FlowError::Shape(format!("source has {} parameters, got {}", self.n_params(), p.len())));
        }
        if let Self::TailAdaptive(s) = self {
            s.theta = p[0];
        }
        Ok(())
    }

    /// Degrees of freedom, when the source is tail-adaptive.
    pub fn nu(&self) -> Option<f64> {
        match self {
            Self::Fixed(_) => None,
            Self::TailAdaptive(s) => Some(s.nu()),
        }
    }

    /// Per-coordinate law.
    pub fn marginal(&self) -> Distribution1D {
        match self {
            Self::Fixed(s) => s.base,
            Self::TailAdaptive(s) => Distribution1D::StudentT { nu: s.nu(), loc: 0.0, scale: 1.0 },
        }
    }

    pub fn log_prob(&self, z: &[f64]) -> f64 {
        match self {
            Self::Fixed(s) => s.log_density(z),
            Self::TailAdaptive(s) => {
                let mut g = crate::autograd::Eval;
                TafSource::log_prob_on(&mut g, s.theta, z)
            }
        }
    }

    /// Log-density on a graph; `params` holds the source parameters.
    pub fn log_prob_on<G: Graph>(&self, g: &mut G, params: &[G::Value], z: &[G::Value]) -> G::Value {
        match self {
            Self::TailAdaptive(_) => TafSource::log_prob_on(g, params[0], z),
            Self::Fixed(s) => {
                let terms: Vec<G::Value> = z.iter().map(|&v| marginal_log_density_on(g, &s.base, v)).collect();
                g.sum(&terms)
            }
        }
    }

    pub fn sample(&self, seed: u64, n: usize) -> Array2<f64> {
        let law = self.marginal();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = self.dim();
        let flat = law.sample_with(&mut rng, n * dim);
        Array2::from_shape_vec((n, dim), flat).expect("n·d values")
    }
}

// Fixed-parameter univariate log-density, differentiable in x.
fn marginal_log_density_on<G: Graph>(g: &mut G, law: &Distribution1D, x: G::Value) -> G::Value {
    match *law {
        Distribution1D::Gaussian { mean, std } => {
            let c = g.add_const(x, -mean);
            let y = g.scale(c, 1.0 / std);
            let sq = g.square(y);
            let h = g.scale(sq, -0.5);
            g.add_const(h, -0.5 * (2.0 * PI).ln() - std.ln())
        }
        Distribution1D::StudentT { nu, loc, scale } => {
            let c = g.add_const(x, -loc);
            let y = g.scale(c, 1.0 / scale);
            let sq = g.square(y);
            let r = g.scale(sq, 1.0 / nu);
            let r1 = g.add_const(r, 1.0);
            let l = g.ln(r1);
            let k = g.scale(l, -0.5 * (nu + 1.0));
            let norm = law.log_density(loc);
            g.add_const(k, norm)
        }
        Distribution1D::Cauchy { loc, scale } => {
            let c = g.add_const(x, -loc);
            let y = g.scale(c, 1.0 / scale);
            let sq = g.square(y);
            let r1 = g.add_const(sq, 1.0);
            let l = g.ln(r1);
            let k = g.neg(l);
            g.add_const(k, -(PI * scale).ln())
        }
        Distribution1D::Uniform { .. } => {
            let v = law.log_density(g.value(x));
            g.constant(v)
        }
        Distribution1D::Exponential { rate } => {
            if g.value(x) < 0.0 {
                g.constant(f64::NEG_INFINITY)
            } else {
                let k = g.scale(x, -rate);
                g.add_const(k, rate.ln())
            }
        }
    }
}
