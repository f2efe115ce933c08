//! Small statistics helpers for the Monte Carlo verifiers.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::erf::erfc;

/// Sample mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

impl Estimate {
    pub fn from_samples(samples: &[f64]) -> Estimate {
        let n = samples.len();
        if n == 0 {
            return Estimate { mean: f64::NAN, se: f64::NAN, n };
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        if n == 1 {
            return Estimate { mean, se: f64::INFINITY, n };
        }
        let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        Estimate { mean, se: (var / n as f64).sqrt(), n }
    }

    /// Exact value with zero uncertainty.
    pub fn exact(value: f64) -> Estimate {
        Estimate { mean: value, se: 0.0, n: 0 }
    }

    pub fn scale(self, c: f64) -> Estimate {
        Estimate { mean: self.mean * c, se: self.se * c.abs(), n: self.n }
    }

    /// z-score of `self − other` assuming independent errors.
    pub fn z_against(&self, other: &Estimate) -> f64 {
        z_score(self.mean - other.mean, (self.se.powi(2) + other.se.powi(2)).sqrt())
    }
}

/// `diff / se`, treating `0/0` as a perfect match.
pub fn z_score(diff: f64, se: f64) -> f64 {
    if se > 0.0 {
        diff / se
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY.copysign(diff)
    }
}

/// Unbiased sample variance and an estimate of its standard error based on
/// the fourth central moment.
pub fn variance_with_se(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let m2 = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m4 = samples.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
    let var = m2 * n / (n - 1.0);
    let se = ((m4 - m2 * m2 * (n - 3.0) / (n - 1.0)) / n).max(0.0).sqrt();
    (var, se)
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// `P(N(0,1) ≥ x)` evaluated through `erfc` (accurate deep in the tail).
pub fn gaussian_tail(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// Leading-order Mills-ratio approximation `x⁻¹ e^{−x²/2} / √(2π)`.
pub fn gaussian_tail_asymptotic(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (x * (2.0 * std::f64::consts::PI).sqrt())
}

/// One-sample Kolmogorov–Smirnov statistic against `cdf`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let n = s.len() as f64;
    s.iter().enumerate().fold(0.0, |d, (k, &x)| {
        let f = cdf(x);
        d.max(f - k as f64 / n).max((k + 1) as f64 / n - f)
    })
}

/// Asymptotic p-value of a KS statistic `d` on `n` samples (Kolmogorov
/// series with the Stephens small-sample correction).
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut p = 0.0;
    for k in 1..=100 {
        let term = 2.0 * (-1f64).powi(k - 1) * (-2.0 * (k as f64 * lambda).powi(2)).exp();
        p += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    p.clamp(0.0, 1.0)
}

/// Composite Simpson rule with `n` (rounded up to even) intervals.
pub fn simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    let n = n.max(2).div_ceil(2) * 2;
    let h = (hi - lo) / n as f64;
    let inner: f64 = (1..n).map(|k| f(lo + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 }).sum();
    (f(lo) + f(hi) + inner) * h / 3.0
}

/// Upper-tail probability of a χ² statistic.
pub fn chi_square_p_value(stat: f64, dof: usize) -> f64 {
    let dist = ChiSquared::new(dof as f64).expect("dof > 0");
    1.0 - dist.cdf(stat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn simpson_is_exact_on_cubics() {
        assert_abs_diff_eq!(simpson(|x| x * x * x - x, 0.0, 2.0, 3), 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(simpson(f64::sin, 0.0, std::f64::consts::PI, 200), 2.0, epsilon = 1e-8);
    }

    #[test]
    fn estimate_basics() {
        let e = Estimate::from_samples(&[1.0, 2.0, 3.0, 4.0]);
        assert_abs_diff_eq!(e.mean, 2.5);
        assert_abs_diff_eq!(e.se, (5.0f64 / 3.0 / 4.0).sqrt(), epsilon = 1e-12);
        assert_eq!(z_score(0.0, 0.0), 0.0);
        assert!(z_score(1.0, 0.0).is_infinite());
    }

    #[test]
    fn tail_matches_asymptotic_within_ten_percent() {
        for k in 0..=20 {
            let x = 3.0 + 0.1 * k as f64;
            let r = gaussian_tail(x) / gaussian_tail_asymptotic(x);
            assert!((r - 1.0).abs() < 0.1, "x = {x}, ratio {r}");
        }
        assert_abs_diff_eq!(gaussian_tail(3.0), 1.349898e-3, epsilon = 1e-8);
    }

    #[test]
    fn ks_p_value_limits() {
        assert!(ks_p_value(0.0, 100) > 0.999);
        assert!(ks_p_value(0.5, 100) < 1e-10);
        // Critical value at 5 % for large n is ≈ 1.358/√n.
        let p = ks_p_value(1.358 / (10_000f64).sqrt(), 10_000);
        assert!((p - 0.05).abs() < 0.005, "p = {p}");
    }

    #[test]
    fn chi_square_median() {
        assert_abs_diff_eq!(chi_square_p_value(0.454936, 1), 0.5, epsilon = 1e-5);
    }
}
