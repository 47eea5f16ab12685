//! Special functions used by the student-t objective and the Gaussian law.
//!
//! `lgamma` uses the Lanczos approximation with `g = 7` and nine
//! coefficients. `digamma` lifts its argument above 6 with the recurrence
//! `ψ(x) = ψ(x + 1) − 1/x` and finishes with the asymptotic series. `erf` and
//! `erfc` switch from a positive-term power series to a continued fraction at
//! `|x| = 3`.

use std::f64::consts::PI;

use super::AutogradError;

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEFFS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// ln(√(2π))
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

const ERF_SPLIT: f64 = 3.0;

/// Natural log of the gamma function for `x > 0`.
pub fn lgamma(x: f64) -> Result<f64, AutogradError> {
    if x > 0.0 {
        Ok(lgamma_unchecked(x))
    } else {
        Err(AutogradError::Domain { function: "lgamma", arg: x })
    }
}

/// `lgamma` without the domain check. Returns NaN for `x <= 0`.
pub(crate) fn lgamma_unchecked(x: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NAN;
    }
    if x < 0.5 {
        // Reflection: Γ(x)Γ(1−x) = π / sin(πx)
        return (PI / (PI * x).sin()).ln() - lanczos(1.0 - x);
    }
    lanczos(x)
}

fn lanczos(x: f64) -> f64 {
    let x = x - 1.0;
    let mut acc = LANCZOS_COEFFS[0];
    for (i, c) in LANCZOS_COEFFS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    LN_SQRT_2PI + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Digamma ψ(x) = d/dx ln Γ(x) for `x > 0`.
pub fn digamma(x: f64) -> Result<f64, AutogradError> {
    if x > 0.0 {
        Ok(digamma_unchecked(x))
    } else {
        Err(AutogradError::Domain { function: "digamma", arg: x })
    }
}

pub(crate) fn digamma_unchecked(mut x: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NAN;
    }
    let mut shift = 0.0;
    while x < 6.0 {
        shift -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // Bernoulli-number series in 1/x².
    let tail = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2
                        * (1.0 / 252.0
                            - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0 - inv2 * 691.0 / 32_760.0)))));
    shift + x.ln() - 0.5 * inv - tail
}

/// Error function `erf(x) = 2/√π ∫₀ˣ e^{−s²} ds`.
pub fn erf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    let ax = x.abs();
    let v = if ax < ERF_SPLIT { erf_series(ax) } else { 1.0 - erfc_cf(ax) };
    v.copysign(x)
}

/// Complementary error function `1 − erf(x)`, accurate in the upper tail.
pub fn erfc(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x >= ERF_SPLIT {
        erfc_cf(x)
    } else if x >= 0.0 {
        1.0 - erf_series(x)
    } else if x > -ERF_SPLIT {
        1.0 + erf_series(-x)
    } else {
        2.0 - erfc_cf(-x)
    }
}

// erf(x) = 2/√π · e^{−x²} · Σ 2ⁿ x^{2n+1} / (2n+1)!!, all terms positive.
fn erf_series(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    let mut n = 0.0;
    loop {
        n += 1.0;
        term *= 2.0 * x2 / (2.0 * n + 1.0);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    2.0 / PI.sqrt() * (-x2).exp() * sum
}

// erfc(x) = e^{−x²}/√π · 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + …)))), modified Lentz.
fn erfc_cf(x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for k in 1..500 {
        let a = k as f64 * 0.5;
        d = x + a * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = x + a / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x * x).exp() / PI.sqrt() / f
}

#[cfg(test)]
mod tests {
    use super::*;

    // Independent oracle: shift upward, then Stirling's series with many terms.
    fn lgamma_stirling(mut x: f64) -> f64 {
        let mut acc = 0.0;
        while x < 30.0 {
            acc -= x.ln();
            x += 1.0;
        }
        let inv = 1.0 / x;
        let inv2 = inv * inv;
        let series = inv
            * (1.0 / 12.0
                - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 * (1.0 / 1680.0 - inv2 / 1188.0))));
        acc + (x - 0.5) * x.ln() - x + LN_SQRT_2PI + series
    }

    // ψ(x) = −γ + Σ_{k≥1} (1/k − 1/(k+x−1)), truncated with an integral tail correction.
    fn digamma_series(x: f64) -> f64 {
        const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
        let n = 1_000_000usize;
        let mut s = 0.0;
        for k in (1..=n).rev() {
            let k = k as f64;
            s += 1.0 / k - 1.0 / (k + x - 1.0);
        }
        let nf = n as f64;
        // Σ_{k>N} (1/k − 1/(k+x−1)) ≈ ln((N+x−½)/(N+½))
        let tail = ((nf + x - 0.5) / (nf + 0.5)).ln();
        -EULER_GAMMA + s + tail
    }

    fn erf_simpson(x: f64) -> f64 {
        let n = 20_000;
        let h = x / n as f64;
        let f = |s: f64| (-s * s).exp();
        let mut acc = f(0.0) + f(x);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(i as f64 * h);
        }
        2.0 / PI.sqrt() * acc * h / 3.0
    }

    #[test]
    fn lgamma_known_values() {
        assert!(lgamma(1.0).unwrap().abs() < 1e-14);
        assert!(lgamma(2.0).unwrap().abs() < 1e-14);
        assert!((lgamma(0.5).unwrap() - PI.sqrt().ln()).abs() < 1e-14);
        assert!((lgamma(0.5).unwrap() - 0.572_364_942_924_700_1).abs() < 1e-14);
        // ln(9!) = ln 362880
        assert!((lgamma(10.0).unwrap() - 362_880f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn lgamma_matches_stirling_oracle() {
        let mut x = 0.5;
        while x <= 100.0 {
            let err = (lgamma(x).unwrap() - lgamma_stirling(x)).abs();
            assert!(err < 1e-10, "x={x} err={err}");
            x += 0.37;
        }
    }

    #[test]
    fn lgamma_rejects_nonpositive() {
        assert!(lgamma(0.0).is_err());
        assert!(lgamma(-1.5).is_err());
        assert!(digamma(0.0).is_err());
    }

    #[test]
    fn digamma_known_values() {
        let psi1 = digamma(1.0).unwrap();
        assert!((psi1 + 0.577_215_664_901_532_9).abs() < 1e-12, "{psi1}");
        let psi_half = digamma(0.5).unwrap();
        assert!((psi_half - (-0.577_215_664_901_532_9 - 2.0 * 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn digamma_matches_series_oracle() {
        for &x in &[0.3, 1.0, 1.7, 2.5, 4.0, 7.3, 15.0] {
            let err = (digamma(x).unwrap() - digamma_series(x)).abs();
            assert!(err < 1e-10, "x={x} err={err}");
        }
    }

    #[test]
    fn digamma_is_lgamma_derivative() {
        for &x in &[0.7, 1.3, 3.0, 12.5, 40.0] {
            let h = 1e-5;
            let fd = (lgamma(x + h).unwrap() - lgamma(x - h).unwrap()) / (2.0 * h);
            assert!((fd - digamma(x).unwrap()).abs() < 1e-8);
        }
    }

    #[test]
    fn erf_values_and_symmetry() {
        assert_eq!(erf(0.0), 0.0);
        // 2Φ(1) − 1
        assert!((erf(1.0 / 2f64.sqrt()) - 0.682_689_492_137_085_9).abs() < 1e-12);
        for &x in &[0.1, 0.5, 1.0, 2.0, 2.9, 3.1, 4.5, 6.0] {
            assert_eq!(erf(-x), -erf(x));
            let err = (erf(x) - erf_simpson(x)).abs();
            assert!(err < 1e-12, "x={x} err={err}");
        }
    }

    #[test]
    fn erfc_is_continuous_across_split() {
        let lo = 1.0 - erf_series(ERF_SPLIT);
        let hi = erfc_cf(ERF_SPLIT);
        assert!(((lo - hi) / hi).abs() < 1e-9);
        assert!((erfc(-1.0) - (1.0 + erf(1.0))).abs() < 1e-15);
        // erfc(5) = 1.5374597944280348e-12
        assert!((erfc(5.0) / 1.537_459_794_428_034_8e-12 - 1.0).abs() < 1e-12);
    }
}
