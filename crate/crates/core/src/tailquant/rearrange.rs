use serde::{Deserialize, Serialize};

use crate::dists::Distribution1D;

/// Probabilities are clamped to `[CLAMP_EPS, 1 − CLAMP_EPS]` before inversion.
pub const CLAMP_EPS: f64 = 1e-15;

/// The monotone map `T = Q_target ∘ F_source` between two univariate laws.
///
/// ```
/// use tailflow::dists::Distribution1D;
/// use tailflow::tailquant::Rearrangement1D;
///
/// let r = Rearrangement1D::new(
///     Distribution1D::uniform(0.0, 1.0).unwrap(),
///     Distribution1D::cauchy(0.0, 1.0).unwrap(),
/// );
/// assert!((r.evaluate(0.75) - 1.0).abs() < 1e-12);
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rearrangement1D {
    pub source: Distribution1D,
    pub target: Distribution1D,
}

/// One evaluation of a rearrangement with its diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RearrangementPoint {
    pub value: f64,
    /// `F_source(z)`, before clamping.
    pub u: f64,
    /// Whether `u` had to be clamped away from 0 or 1.
    pub clamped: bool,
}

impl Rearrangement1D {
    pub fn new(source: Distribution1D, target: Distribution1D) -> Self {
        Self { source, target }
    }

    pub fn evaluate(&self, z: f64) -> f64 {
        self.evaluate_detailed(z).value
    }

    pub fn evaluate_detailed(&self, z: f64) -> RearrangementPoint {
        let u = self.source.cdf(z);
        // Work on whichever tail keeps full precision.
        let (value, clamped) = if u <= 0.5 {
            let c = u.max(CLAMP_EPS);
            (self.target.quantile_unchecked(c), c != u)
        } else {
            let p = self.source.sf(z);
            let c = p.max(CLAMP_EPS);
            (self.target.quantile_upper_unchecked(c), c != p)
        };
        if clamped {
            log::debug!("rearrangement clamped F_source({z}) = {u}");
        }
        RearrangementPoint { value, u, clamped }
    }

    /// `T'(z) = p(z) / q(T(z))`.
    pub fn slope(&self, z: f64) -> f64 {
        self.source.density(z) / self.target.density(self.evaluate(z))
    }
}
