use super::special::{lgamma_unchecked, digamma_unchecked};

/// Scalar arithmetic that can either run eagerly on `f64` ([`Eval`]) or be
/// recorded for reverse-mode differentiation ([`super::Tape`]).
///
/// Model code (conditioner networks, flow layers, source log-densities) is
/// written once against this trait and reused for plain evaluation and for
/// gradient computation.
pub trait Graph {
    type Value: Copy;

    fn constant(&mut self, v: f64) -> Self::Value;
    fn value(&self, v: Self::Value) -> f64;

    fn add(&mut self, a: Self::Value, b: Self::Value) -> Self::Value;
    fn sub(&mut self, a: Self::Value, b: Self::Value) -> Self::Value;
    fn mul(&mut self, a: Self::Value, b: Self::Value) -> Self::Value;
    fn div(&mut self, a: Self::Value, b: Self::Value) -> Self::Value;
    fn neg(&mut self, a: Self::Value) -> Self::Value;
    fn exp(&mut self, a: Self::Value) -> Self::Value;
    fn ln(&mut self, a: Self::Value) -> Self::Value;
    fn tanh(&mut self, a: Self::Value) -> Self::Value;
    fn sigmoid(&mut self, a: Self::Value) -> Self::Value;
    fn relu(&mut self, a: Self::Value) -> Self::Value;
    fn softplus(&mut self, a: Self::Value) -> Self::Value;
    fn square(&mut self, a: Self::Value) -> Self::Value;
    fn lgamma(&mut self, a: Self::Value) -> Self::Value;

    /// `bias + Σ weights[i] · inputs[i]`
    fn affine(&mut self, bias: Self::Value, weights: &[Self::Value], inputs: &[Self::Value]) -> Self::Value;

    fn sum(&mut self, terms: &[Self::Value]) -> Self::Value;

    fn scale(&mut self, a: Self::Value, k: f64) -> Self::Value {
        let k = self.constant(k);
        self.mul(a, k)
    }

    fn add_const(&mut self, a: Self::Value, k: f64) -> Self::Value {
        let k = self.constant(k);
        self.add(a, k)
    }
}

/// Eager `f64` evaluation.
#[derive(Debug, Default, Clone, Copy)]
pub struct Eval;

impl Graph for Eval {
    type Value = f64;

    fn constant(&mut self, v: f64) -> f64 {
        v
    }
    fn value(&self, v: f64) -> f64 {
        v
    }
    fn add(&mut self, a: f64, b: f64) -> f64 {
        a + b
    }
    fn sub(&mut self, a: f64, b: f64) -> f64 {
        a - b
    }
    fn mul(&mut self, a: f64, b: f64) -> f64 {
        a * b
    }
    fn div(&mut self, a: f64, b: f64) -> f64 {
        a / b
    }
    fn neg(&mut self, a: f64) -> f64 {
        -a
    }
    fn exp(&mut self, a: f64) -> f64 {
        a.exp()
    }
    fn ln(&mut self, a: f64) -> f64 {
        a.ln()
    }
    fn tanh(&mut self, a: f64) -> f64 {
        a.tanh()
    }
    fn sigmoid(&mut self, a: f64) -> f64 {
        sigmoid(a)
    }
    fn relu(&mut self, a: f64) -> f64 {
        a.max(0.0)
    }
    fn softplus(&mut self, a: f64) -> f64 {
        softplus(a)
    }
    fn square(&mut self, a: f64) -> f64 {
        a * a
    }
    fn lgamma(&mut self, a: f64) -> f64 {
        lgamma_unchecked(a)
    }
    fn affine(&mut self, bias: f64, weights: &[f64], inputs: &[f64]) -> f64 {
        debug_assert_eq!(weights.len(), inputs.len());
        weights.iter().zip(inputs).fold(bias, |acc, (w, x)| acc + w * x)
    }
    fn sum(&mut self, terms: &[f64]) -> f64 {
        terms.iter().sum()
    }
    fn scale(&mut self, a: f64, k: f64) -> f64 {
        a * k
    }
    fn add_const(&mut self, a: f64, k: f64) -> f64 {
        a + k
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + eˣ) without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp()
    } else {
        x.exp().ln_1p()
    }
}

/// Inverse of [`softplus`] for `y > 0`.
pub fn softplus_inverse(y: f64) -> f64 {
    if y > 30.0 {
        y + (-(-y).exp_m1()).ln()
    } else {
        y.exp_m1().ln()
    }
}

pub(crate) fn digamma_partial(x: f64) -> f64 {
    digamma_unchecked(x)
}
