//! Tail measurement on samples and on exact quantile functions.
//!
//! The tail coefficient `γ` describes how fast the quantile function grows
//! near one, `Q(u) ∼ (1 − u)^{−γ}`, and the tail exponent `α = γ + 1` is the
//! matching decay rate of the density quantile `fQ(u) ∼ (1 − u)^α`. Moments of
//! order `ω` are finite exactly when `ω < 1/γ`.
//!
//! ```
//! use tailflow::tailquant::{fit_quantile_curve, FitWindow};
//!
//! let profile = fit_quantile_curve(|u| (1.0 - u).powf(-0.5), FitWindow::default(), 50).unwrap();
//! assert!((profile.gamma - 0.5).abs() < 1e-12);
//! assert_eq!(profile.alpha, profile.gamma + 1.0);
//! ```

mod rearrange;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dists::DistError;

pub use rearrange::{Rearrangement1D, RearrangementPoint, CLAMP_EPS};

/// Classification threshold used by [`classify_tail`].
pub const DEFAULT_TAU: f64 = 0.1;

/// Default number of grid points for the quantile regression.
pub const DEFAULT_POINTS: usize = 50;

/// Minimum sample size accepted by [`estimate_gamma`].
pub const MIN_SAMPLES: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TailError {
    #[error("sample is empty")]
    Empty,
    #[error("sample contains a non-finite value at index {0}")]
    NonFinite(usize),
    #[error("{what} must lie in {range}, got {value}")]
    Domain { what: &'static str, range: &'static str, value: f64 },
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { got: usize, need: usize },
    #[error("only {got} usable tail points in the fit window, need {need}")]
    TooFewTailPoints { got: usize, need: usize },
    #[error("quantiles in the fit window are not positive even after shifting")]
    NonPositiveQuantiles,
    #[error(transparent)]
    Dist(#[from] DistError),
}

/// Probability range `[lo, hi]` over which the tail is fitted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitWindow {
    pub lo: f64,
    pub hi: f64,
}

impl Default for FitWindow {
    fn default() -> Self {
        Self { lo: 0.95, hi: 0.999 }
    }
}

impl FitWindow {
    pub fn new(lo: f64, hi: f64) -> Result<Self, TailError> {
        let w = Self { lo, hi };
        w.validate()?;
        Ok(w)
    }

    fn validate(&self) -> Result<(), TailError> {
        if !(0.5..1.0).contains(&self.lo) {
            return Err(TailError::Domain { what: "window start", range: "[0.5, 1)", value: self.lo });
        }
        if !(self.hi > self.lo && self.hi < 1.0) {
            return Err(TailError::Domain { what: "window end", range: "(start, 1)", value: self.hi });
        }
        Ok(())
    }

    /// `points` evenly spaced probabilities from `lo` to `hi` inclusive.
    pub fn grid(&self, points: usize) -> Vec<f64> {
        if points == 1 {
            return vec![self.lo];
        }
        let step = (self.hi - self.lo) / (points - 1) as f64;
        (0..points).map(|i| self.lo + i as f64 * step).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GammaMethod {
    /// Least-squares slope of `ln Q̂(u)` against `−ln(1 − u)`.
    QuantileRegression { points: usize },
    /// Hill estimator on the top `⌊(1 − lo)·n⌋` order statistics.
    Hill,
}

impl Default for GammaMethod {
    fn default() -> Self {
        Self::QuantileRegression { points: DEFAULT_POINTS }
    }
}

/// Fitted tail parameters with diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailProfile {
    pub gamma: f64,
    /// Always `gamma + 1`.
    pub alpha: f64,
    /// Shape exponent, set when the profile classifies as medium-tailed.
    pub beta: Option<f64>,
    /// Raw slope of `ln Q̂(u)` against `ln ln(1/(1 − u))`.
    pub log_quantile_slope: f64,
    pub fit_window: FitWindow,
    /// Coefficient of determination of the `γ` regression.
    pub r_squared: f64,
    pub n_points: usize,
    /// Constant added to the sample before taking logs, if one was needed.
    pub shift: Option<f64>,
}

impl TailProfile {
    fn from_fit(gamma: f64, beta_slope: f64, window: FitWindow, r2: f64, n_points: usize, shift: Option<f64>) -> Self {
        let beta = medium_band(beta_slope, DEFAULT_TAU).then(|| beta_slope.clamp(0.0, 1.0));
        Self {
            gamma,
            alpha: gamma + 1.0,
            beta,
            log_quantile_slope: beta_slope,
            fit_window: window,
            r_squared: r2,
            n_points,
            shift,
        }
    }

    pub fn moment_order_bound(&self) -> f64 {
        moment_order_bound(self.gamma)
    }

    pub fn moment_exists(&self, omega: f64) -> bool {
        moment_exists(self.gamma, omega)
    }
}

/// Tail classes ordered from lightest to heaviest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", content = "value", rename_all = "snake_case")]
pub enum TailClass {
    BoundedAbove,
    Light,
    Medium(f64),
    Heavy(f64),
}

/// An ascending copy of a finite sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SortedSample(Vec<f64>);

impl SortedSample {
    pub fn new(samples: &[f64]) -> Result<Self, TailError> {
        if samples.is_empty() {
            return Err(TailError::Empty);
        }
        if let Some(i) = samples.iter().position(|x| !x.is_finite()) {
            return Err(TailError::NonFinite(i));
        }
        let mut v = samples.to_vec();
        v.sort_by(f64::total_cmp);
        Ok(Self(v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// The `⌈u·n⌉`-th order statistic.
    pub fn quantile(&self, u: f64) -> Result<f64, TailError> {
        if !(u > 0.0 && u < 1.0) {
            return Err(TailError::Domain { what: "probability", range: "(0, 1)", value: u });
        }
        let n = self.0.len();
        let k = ((u * n as f64).ceil() as usize).clamp(1, n);
        Ok(self.0[k - 1])
    }
}

/// The `⌈u·n⌉`-th order statistic of `samples`.
pub fn empirical_quantile(samples: &[f64], u: f64) -> Result<f64, TailError> {
    SortedSample::new(samples)?.quantile(u)
}

/// Fits `γ` to an exact quantile function over the window.
pub fn fit_quantile_curve<F>(q: F, window: FitWindow, points: usize) -> Result<TailProfile, TailError>
where
    F: Fn(f64) -> f64,
{
    window.validate()?;
    if points < 3 {
        return Err(TailError::TooFewTailPoints { got: points, need: 3 });
    }
    let grid = window.grid(points);
    let qs: Vec<f64> = grid.iter().map(|&u| q(u)).collect();
    if qs.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(TailError::NonPositiveQuantiles);
    }
    Ok(regress(&grid, &qs, window, None))
}

/// Estimates the right-tail coefficient of a sample.
///
/// Nonpositive quantiles inside the window are handled by shifting the whole
/// sample so that its minimum sits at zero; the shift is recorded on the
/// profile.
pub fn estimate_gamma(samples: &[f64], window: FitWindow, method: GammaMethod) -> Result<TailProfile, TailError> {
    window.validate()?;
    if samples.len() < MIN_SAMPLES {
        if samples.is_empty() {
            return Err(TailError::Empty);
        }
        return Err(TailError::TooFewSamples { got: samples.len(), need: MIN_SAMPLES });
    }
    let sorted = SortedSample::new(samples)?;
    let n = sorted.len();
    let lowest_in_window = sorted.quantile(window.lo)?;
    let shift = if lowest_in_window > 0.0 {
        None
    } else {
        let s = -sorted.as_slice()[0];
        log::warn!("quantiles in the fit window are not positive; shifting sample by {s}");
        Some(s)
    };
    let off = shift.unwrap_or(0.0);

    let points = match method {
        GammaMethod::QuantileRegression { points } => points,
        GammaMethod::Hill => DEFAULT_POINTS,
    };
    if points < 3 {
        return Err(TailError::TooFewTailPoints { got: points, need: 3 });
    }
    let grid = window.grid(points);
    let mut qs = Vec::with_capacity(points);
    for &u in &grid {
        qs.push(sorted.quantile(u)? + off);
    }
    if qs[0] <= 0.0 {
        return Err(TailError::NonPositiveQuantiles);
    }
    let mut profile = regress(&grid, &qs, window, shift);

    if let GammaMethod::Hill = method {
        let k = ((1.0 - window.lo) * n as f64).floor() as usize;
        if k < 2 || k >= n {
            return Err(TailError::TooFewTailPoints { got: k, need: 2 });
        }
        let xs = sorted.as_slice();
        let threshold = xs[n - k - 1] + off;
        if threshold <= 0.0 {
            return Err(TailError::NonPositiveQuantiles);
        }
        let gamma = xs[n - k..].iter().map(|&x| ((x + off) / threshold).ln()).sum::<f64>() / k as f64;
        profile.gamma = gamma;
        profile.alpha = gamma + 1.0;
        profile.n_points = k;
    }
    Ok(profile)
}

// γ from ln Q vs −ln(1−u); β̂ from ln Q vs ln ln(1/(1−u)).
fn regress(grid: &[f64], qs: &[f64], window: FitWindow, shift: Option<f64>) -> TailProfile {
    let ln_q: Vec<f64> = qs.iter().map(|q| q.ln()).collect();
    let x_gamma: Vec<f64> = grid.iter().map(|u| -(-u).ln_1p()).collect();
    let x_beta: Vec<f64> = x_gamma.iter().map(|x| x.ln()).collect();
    let (gamma, r2) = least_squares(&x_gamma, &ln_q);
    let (beta_slope, _) = least_squares(&x_beta, &ln_q);
    TailProfile::from_fit(gamma, beta_slope, window, r2, grid.len(), shift)
}

/// Slope and coefficient of determination of an ordinary least-squares line.
pub(crate) fn least_squares(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) };
    (slope, r2)
}

/// Euclidean norm of each row.
pub fn norm_reduce(points: &ndarray::Array2<f64>) -> Vec<f64> {
    points.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect()
}

/// `1/γ`, the supremum of finite moment orders; `+∞` when `γ ≤ 0`.
pub fn moment_order_bound(gamma: f64) -> f64 {
    if gamma > 0.0 {
        1.0 / gamma
    } else {
        f64::INFINITY
    }
}

/// Whether `E|X|^ω` is finite for a law with tail coefficient `γ`.
pub fn moment_exists(gamma: f64, omega: f64) -> bool {
    omega < moment_order_bound(gamma)
}

fn medium_band(beta_slope: f64, tau: f64) -> bool {
    (tau..=1.0 + tau).contains(&beta_slope)
}

/// [`classify_tail_with`] at the default threshold.
pub fn classify_tail(profile: &TailProfile) -> TailClass {
    classify_tail_with(profile, DEFAULT_TAU)
}

/// Assigns a tail class from the fitted slopes.
///
/// The shape slope `β̂` separates the classes: power-law quantiles make it
/// grow without bound, exponential-type quantiles keep it near `β`, and
/// bounded supports flatten it to zero. A clearly negative `γ` means the
/// quantile decays into a finite endpoint.
pub fn classify_tail_with(profile: &TailProfile, tau: f64) -> TailClass {
    let b = profile.log_quantile_slope;
    if profile.alpha < 1.0 - tau {
        TailClass::Light
    } else if b > 1.0 + tau {
        TailClass::Heavy(profile.gamma)
    } else if b < tau {
        TailClass::BoundedAbove
    } else {
        TailClass::Medium(b.clamp(0.0, 1.0))
    }
}

/// Largest absolute gap between the empirical cdf of `samples` and `cdf`.
pub fn ks_statistic<F>(samples: &[f64], cdf: F) -> Result<f64, TailError>
where
    F: Fn(f64) -> f64,
{
    let sorted = SortedSample::new(samples)?;
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.as_slice().iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    Ok(d)
}
