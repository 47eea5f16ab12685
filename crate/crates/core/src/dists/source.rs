use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DistError, Distribution1D};
use crate::autograd::special::lgamma_unchecked;

/// `d` independent copies of a univariate law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IidSource {
    pub dim: usize,
    pub base: Distribution1D,
}

impl IidSource {
    pub fn new(dim: usize, base: Distribution1D) -> Result<Self, DistError> {
        if dim == 0 {
            return Err(DistError::InvalidParameter("dimension must be positive".into()));
        }
        Ok(Self { dim, base })
    }

    pub fn standard_gaussian(dim: usize) -> Self {
        Self { dim: dim.max(1), base: Distribution1D::standard_gaussian() }
    }

    /// Sum of the per-coordinate log-densities.
    pub fn log_density(&self, z: &[f64]) -> f64 {
        debug_assert_eq!(z.len(), self.dim);
        z.iter().map(|&x| self.base.log_density(x)).sum()
    }

    /// `n × d` matrix of inverse-cdf samples, filled row by row.
    pub fn sample(&self, seed: u64, n: usize) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((n, self.dim), || self.base.draw(&mut rng))
    }
}

/// Log-density of `t_ν(0, I)` in `d = z.len()` dimensions with independent
/// coordinates:
///
/// `d·lnΓ((ν+1)/2) − d·lnΓ(ν/2) − (d/2)·ln(νπ) − Σⱼ (ν+1)/2 · ln(1 + zⱼ²/ν)`.
///
/// `ν = 1` (the Cauchy product) is accepted; smaller values are rejected.
pub fn student_t_iid_log_density(nu: f64, z: &[f64]) -> Result<f64, DistError> {
    if !(nu >= 1.0) || !nu.is_finite() {
        return Err(DistError::Domain { what: "degrees of freedom", range: "[1, ∞)", value: nu });
    }
    let d = z.len() as f64;
    let norm = d * (lgamma_unchecked(0.5 * (nu + 1.0)) - lgamma_unchecked(0.5 * nu))
        - 0.5 * d * (nu * std::f64::consts::PI).ln();
    let kernel: f64 = z.iter().map(|&x| (x * x / nu).ln_1p()).sum();
    Ok(norm - 0.5 * (nu + 1.0) * kernel)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cauchy_limit() {
        let v = student_t_iid_log_density(1.0, &[0.0]).unwrap();
        assert!((v + std::f64::consts::PI.ln()).abs() < 1e-14);
        let c = Distribution1D::cauchy(0.0, 1.0).unwrap();
        assert!((v - c.log_density(0.0)).abs() < 1e-14);
    }

    #[test]
    fn gaussian_limit() {
        let v = student_t_iid_log_density(1e6, &[0.0, 0.0]).unwrap();
        assert!((v + 1.837_877_066_409_345_4).abs() < 1e-4, "{v}");
        let z = [0.7, -1.9];
        let g = IidSource::standard_gaussian(2).log_density(&z);
        assert!((student_t_iid_log_density(1e6, &z).unwrap() - g).abs() < 1e-4);
    }

    #[test]
    fn factorises_over_coordinates() {
        for nu in [1.5, 3.0, 12.0] {
            let (a, b) = (0.4, -2.2);
            let joint = student_t_iid_log_density(nu, &[a, b]).unwrap();
            let split = student_t_iid_log_density(nu, &[a]).unwrap() + student_t_iid_log_density(nu, &[b]).unwrap();
            assert!((joint - split).abs() < 1e-13);
            let law = Distribution1D::student_t(nu, 0.0, 1.0).unwrap();
            assert!((joint - law.log_density(a) - law.log_density(b)).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_small_nu() {
        assert!(student_t_iid_log_density(0.5, &[0.0]).is_err());
        assert!(student_t_iid_log_density(f64::NAN, &[0.0]).is_err());
    }

    #[test]
    fn iid_log_density_is_sum() {
        let src = IidSource::new(3, Distribution1D::student_t(4.0, 0.0, 1.0).unwrap()).unwrap();
        let z = [0.1, -0.5, 2.0];
        let want: f64 = z.iter().map(|&x| src.base.log_density(x)).sum();
        assert_eq!(src.log_density(&z), want);
    }

    #[test]
    fn sample_shape_and_determinism() {
        let src = IidSource::standard_gaussian(2);
        let a = src.sample(5, 10);
        assert_eq!(a.dim(), (10, 2));
        assert_eq!(a, src.sample(5, 10));
        assert_ne!(a, src.sample(6, 10));
    }
}
