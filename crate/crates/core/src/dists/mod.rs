//! Closed-form univariate laws and the iid product source.
//!
//! Every law exposes its density, distribution function `F`, survival
//! function `1 − F`, quantile function `Q = F⁻¹`, and density quantile
//! function `fQ(u) = p(Q(u)) = 1/Q'(u)`. Upper-tail queries go through the
//! survival function and [`Distribution1D::quantile_upper`] so that values of
//! `u` close to one do not lose precision.
//!
//! Log-densities outside a bounded support return `f64::NEG_INFINITY` rather
//! than an error, which keeps likelihood objectives total.

mod beta;
mod source;

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autograd::special::{erfc, lgamma_unchecked};

pub use source::{student_t_iid_log_density, IidSource};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistError {
    #[error("{what} must lie in {range}, got {value}")]
    Domain { what: &'static str, range: &'static str, value: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// A closed-form univariate law.
///
/// Build values through the checked constructors; they reject non-positive
/// scales and empty supports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Distribution1D {
    Gaussian { mean: f64, std: f64 },
    StudentT { nu: f64, loc: f64, scale: f64 },
    Cauchy { loc: f64, scale: f64 },
    Uniform { lo: f64, hi: f64 },
    Exponential { rate: f64 },
}

fn positive(what: &str, v: f64) -> Result<(), DistError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(DistError::InvalidParameter(format!("{what} must be positive and finite, got {v}")))
    }
}

fn finite(what: &str, v: f64) -> Result<(), DistError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(DistError::InvalidParameter(format!("{what} must be finite, got {v}")))
    }
}

fn check_unit(u: f64) -> Result<(), DistError> {
    if u > 0.0 && u < 1.0 {
        Ok(())
    } else {
        Err(DistError::Domain { what: "probability", range: "(0, 1)", value: u })
    }
}

impl Distribution1D {
    pub fn gaussian(mean: f64, std: f64) -> Result<Self, DistError> {
        finite("mean", mean)?;
        positive("std", std)?;
        Ok(Self::Gaussian { mean, std })
    }

    pub fn standard_gaussian() -> Self {
        Self::Gaussian { mean: 0.0, std: 1.0 }
    }

    pub fn student_t(nu: f64, loc: f64, scale: f64) -> Result<Self, DistError> {
        positive("nu", nu)?;
        finite("loc", loc)?;
        positive("scale", scale)?;
        Ok(Self::StudentT { nu, loc, scale })
    }

    pub fn cauchy(loc: f64, scale: f64) -> Result<Self, DistError> {
        finite("loc", loc)?;
        positive("scale", scale)?;
        Ok(Self::Cauchy { loc, scale })
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self, DistError> {
        finite("lo", lo)?;
        finite("hi", hi)?;
        if hi <= lo {
            return Err(DistError::InvalidParameter(format!("uniform needs lo < hi, got [{lo}, {hi}]")));
        }
        Ok(Self::Uniform { lo, hi })
    }

    pub fn exponential(rate: f64) -> Result<Self, DistError> {
        positive("rate", rate)?;
        Ok(Self::Exponential { rate })
    }

    /// Location/scale pair used to standardise the argument.
    fn loc_scale(&self) -> (f64, f64) {
        match *self {
            Self::Gaussian { mean, std } => (mean, std),
            Self::StudentT { loc, scale, .. } | Self::Cauchy { loc, scale } => (loc, scale),
            Self::Uniform { lo, hi } => (lo, hi - lo),
            Self::Exponential { rate } => (0.0, 1.0 / rate),
        }
    }

    /// Open support `(lower, upper)`.
    pub fn support(&self) -> (f64, f64) {
        match *self {
            Self::Uniform { lo, hi } => (lo, hi),
            Self::Exponential { .. } => (0.0, f64::INFINITY),
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    pub fn log_density(&self, x: f64) -> f64 {
        let (loc, scale) = self.loc_scale();
        let y = (x - loc) / scale;
        match *self {
            Self::Gaussian { .. } => -0.5 * y * y - scale.ln() - LN_SQRT_2PI,
            Self::StudentT { nu, .. } => student_t_log_pdf(nu, y) - scale.ln(),
            Self::Cauchy { .. } => -(PI * scale).ln() - (y * y).ln_1p(),
            Self::Uniform { .. } => {
                if (0.0..=1.0).contains(&y) {
                    -scale.ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            Self::Exponential { rate } => {
                if x >= 0.0 {
                    rate.ln() - rate * x
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    pub fn density(&self, x: f64) -> f64 {
        self.log_density(x).exp()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let (loc, scale) = self.loc_scale();
        let y = (x - loc) / scale;
        match *self {
            Self::Gaussian { .. } => 0.5 * erfc(-y * FRAC_1_SQRT_2),
            Self::StudentT { nu, .. } => {
                if y < 0.0 {
                    student_t_sf(nu, -y)
                } else {
                    1.0 - student_t_sf(nu, y)
                }
            }
            Self::Cauchy { .. } => {
                if y < 0.0 {
                    cauchy_sf(-y)
                } else {
                    1.0 - cauchy_sf(y)
                }
            }
            Self::Uniform { .. } => y.clamp(0.0, 1.0),
            Self::Exponential { rate } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-rate * x).exp_m1()
                }
            }
        }
    }

    /// Survival function `1 − F(x)`, computed directly in the upper tail.
    pub fn sf(&self, x: f64) -> f64 {
        let (loc, scale) = self.loc_scale();
        let y = (x - loc) / scale;
        match *self {
            Self::Gaussian { .. } => 0.5 * erfc(y * FRAC_1_SQRT_2),
            Self::StudentT { nu, .. } => {
                if y >= 0.0 {
                    student_t_sf(nu, y)
                } else {
                    1.0 - student_t_sf(nu, -y)
                }
            }
            Self::Cauchy { .. } => {
                if y >= 0.0 {
                    cauchy_sf(y)
                } else {
                    1.0 - cauchy_sf(-y)
                }
            }
            Self::Uniform { .. } => 1.0 - y.clamp(0.0, 1.0),
            Self::Exponential { rate } => {
                if x <= 0.0 {
                    1.0
                } else {
                    (-rate * x).exp()
                }
            }
        }
    }

    /// `Q(u) = inf { t : F(t) ≥ u }` for `u ∈ (0, 1)`.
    pub fn quantile(&self, u: f64) -> Result<f64, DistError> {
        check_unit(u)?;
        Ok(self.quantile_unchecked(u))
    }

    /// `Q(1 − p)` evaluated without forming `1 − p`.
    pub fn quantile_upper(&self, p: f64) -> Result<f64, DistError> {
        check_unit(p)?;
        Ok(self.quantile_upper_unchecked(p))
    }

    pub(crate) fn quantile_unchecked(&self, u: f64) -> f64 {
        match *self {
            Self::Uniform { lo, hi } => lo + u * (hi - lo),
            Self::Exponential { rate } => -(-u).ln_1p() / rate,
            _ => {
                if u > 0.5 {
                    self.quantile_upper_unchecked(1.0 - u)
                } else {
                    // symmetric laws: Q(u) = loc − (Q(1−u) − loc)
                    let (loc, scale) = self.loc_scale();
                    loc - scale * self.standard_isf(u)
                }
            }
        }
    }

    pub(crate) fn quantile_upper_unchecked(&self, p: f64) -> f64 {
        match *self {
            Self::Uniform { lo, hi } => hi - p * (hi - lo),
            Self::Exponential { rate } => -p.ln() / rate,
            _ => {
                let (loc, scale) = self.loc_scale();
                if p <= 0.5 {
                    loc + scale * self.standard_isf(p)
                } else {
                    loc - scale * self.standard_isf(1.0 - p)
                }
            }
        }
    }

    // Inverse survival function of the standardised symmetric law, p ∈ (0, ½].
    fn standard_isf(&self, p: f64) -> f64 {
        if p == 0.5 {
            return 0.0;
        }
        match *self {
            Self::Gaussian { .. } => normal_isf(p),
            Self::StudentT { nu, .. } => student_t_isf(nu, p),
            Self::Cauchy { .. } => 1.0 / (PI * p).tan(),
            Self::Uniform { .. } | Self::Exponential { .. } => unreachable!("asymmetric laws handled by caller"),
        }
    }

    /// Density quantile `fQ(u) = p(Q(u))`.
    pub fn density_quantile(&self, u: f64) -> Result<f64, DistError> {
        check_unit(u)?;
        let x = self.quantile_unchecked(u);
        Ok(self.density(x))
    }

    /// Inverse-cdf samples from a seeded generator.
    pub fn sample(&self, seed: u64, n: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with(&mut rng, n)
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.draw(rng)).collect()
    }

    pub(crate) fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u = open_unit(rng);
        // Fold onto the nearer tail so both tails keep full resolution.
        if u < 0.5 {
            self.quantile_unchecked(u)
        } else {
            self.quantile_upper_unchecked(1.0 - u)
        }
    }
}

/// Uniform draw from the open interval (0, 1).
pub(crate) fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    ((rng.random::<u64>() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

fn student_t_log_pdf(nu: f64, y: f64) -> f64 {
    lgamma_unchecked(0.5 * (nu + 1.0)) - lgamma_unchecked(0.5 * nu) - 0.5 * (nu * PI).ln()
        - 0.5 * (nu + 1.0) * (y * y / nu).ln_1p()
}

// P(T > y) for y ≥ 0: ½ I_{ν/(ν+y²)}(ν/2, ½).
fn student_t_sf(nu: f64, y: f64) -> f64 {
    let y2 = y * y;
    let x = nu / (nu + y2);
    let x1 = y2 / (nu + y2);
    0.5 * beta::inc_beta(0.5 * nu, 0.5, x, x1)
}

fn cauchy_sf(y: f64) -> f64 {
    if y <= 1.0 {
        0.5 - y.atan() / PI
    } else {
        (1.0 / y).atan() / PI
    }
}

/// Upper-tail inverse of the standard normal for `p ∈ (0, ½]`: rational
/// starting point refined by Newton steps on `erfc`.
fn normal_isf(p: f64) -> f64 {
    if p == 0.5 {
        return 0.0;
    }
    let t = (-2.0 * p.ln()).sqrt();
    let mut x = t - (2.515_517 + t * (0.802_853 + t * 0.010_328))
        / (1.0 + t * (1.432_788 + t * (0.189_269 + t * 0.001_308)));
    for _ in 0..60 {
        let sf = 0.5 * erfc(x * FRAC_1_SQRT_2);
        let pdf = (-0.5 * x * x - LN_SQRT_2PI).exp();
        let step = (sf - p) / pdf;
        x += step;
        if step.abs() <= 1e-12 * x.abs().max(1.0) {
            // One more step settles the last bits.
            let sf = 0.5 * erfc(x * FRAC_1_SQRT_2);
            let pdf = (-0.5 * x * x - LN_SQRT_2PI).exp();
            x += (sf - p) / pdf;
            break;
        }
    }
    x
}

/// Upper-tail inverse of the standard student-t for `p ∈ (0, ½]`.
///
/// Newton iterations on `ln sf` inside a shrinking bracket; a step that leaves
/// the bracket is replaced by bisection.
fn student_t_isf(nu: f64, p: f64) -> f64 {
    if p >= 0.5 {
        return 0.0;
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while student_t_sf(nu, hi) > p {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return f64::INFINITY;
        }
    }
    let ln_p = p.ln();
    let mut t = normal_isf(p).clamp(lo, hi);
    if t <= lo || t >= hi {
        t = 0.5 * (lo + hi);
    }
    for _ in 0..300 {
        let sf = student_t_sf(nu, t);
        if sf > p {
            lo = t;
        } else {
            hi = t;
        }
        let pdf = student_t_log_pdf(nu, t).exp();
        let newton = t + (sf.ln() - ln_p) * sf / pdf;
        let next = if newton > lo && newton < hi && newton.is_finite() {
            newton
        } else if lo > 0.0 && hi > 4.0 * lo {
            (lo * hi).sqrt()
        } else {
            0.5 * (lo + hi)
        };
        let done = (next - t).abs() <= 1e-15 * t.max(1e-300) || hi - lo <= 1e-15 * hi;
        t = next;
        if done {
            break;
        }
    }
    t
}
