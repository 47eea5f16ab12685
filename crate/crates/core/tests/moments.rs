//! Finite sample moments stabilise below the order bound `1/γ` and drift
//! upward above it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StudentT;
use tailflow::dists::Distribution1D;
use tailflow::tailquant::{estimate_gamma, moment_exists, FitWindow, GammaMethod};

fn abs_moment(x: &[f64], omega: f64) -> f64 {
    x.iter().map(|v| v.abs().powf(omega)).sum::<f64>() / x.len() as f64
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

#[test]
fn low_order_moments_stabilise_under_doubling() {
    for (i, nu) in [2.0, 3.0, 5.0].into_iter().enumerate() {
        let law = Distribution1D::student_t(nu, 0.0, 1.0).unwrap();
        let x = law.sample(100 + i as u64, 200_000);
        let omega = 0.4 * nu;
        assert!(moment_exists(1.0 / nu, omega));
        let m1 = abs_moment(&x[..100_000], omega);
        let m2 = abs_moment(&x, omega);
        assert!((m2 / m1 - 1.0).abs() < 0.1, "ν={nu}: {m1} vs {m2}");
    }
}

#[test]
fn high_order_moments_grow_with_sample_size() {
    let n = 10_000;
    for (i, nu) in [2.0, 3.0, 5.0].into_iter().enumerate() {
        let law = StudentT::new(nu).unwrap();
        for factor in [1.2, 1.5] {
            let omega = factor * nu;
            assert!(!moment_exists(1.0 / nu, omega));
            let (mut small, mut large) = (Vec::new(), Vec::new());
            for rep in 0..25u64 {
                let mut rng = ChaCha8Rng::seed_from_u64(1000 * (i as u64 + 1) + rep);
                let x: Vec<f64> = (0..16 * n).map(|_| rng.sample(law)).collect();
                small.push(abs_moment(&x[..n], omega));
                large.push(abs_moment(&x, omega));
            }
            let ratio = median(large) / median(small);
            assert!(ratio > 1.3, "ν={nu}, ω={omega}: median ratio {ratio}");
        }
    }
}

#[test]
fn estimated_bound_separates_the_two_regimes() {
    let w = FitWindow::default();
    for (i, nu) in [2.0, 3.0, 5.0].into_iter().enumerate() {
        let x = Distribution1D::student_t(nu, 0.0, 1.0).unwrap().sample(7 + i as u64, 100_000);
        let p = estimate_gamma(&x, w, GammaMethod::default()).unwrap();
        assert!(p.moment_exists(0.4 * nu), "ν={nu}: γ̂={}", p.gamma);
        assert!(!p.moment_exists(1.5 * nu), "ν={nu}: γ̂={}", p.gamma);
    }
}
