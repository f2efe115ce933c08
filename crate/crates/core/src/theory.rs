//! Closed-form constants and curves of the accelerating front.
//!
//! Conventions: `γ` is the front coefficient in `x = γ t^{3/2}`, `a` the
//! clock rate with `∫₀ᵗ θ ds ≈ a t²`. The two are linked at the optimum by
//! `γ² = 6a³`.

use serde::Serialize;

use crate::error::{Error, Result};

/// `γ₀ = (2/3)·2^{1/4}`.
pub fn critical_gamma() -> f64 {
    2.0 * std::f64::consts::SQRT_2.sqrt() / 3.0
}

/// `a₀ = √2/3`, the optimal clock rate at `γ₀`.
pub fn critical_a() -> f64 {
    std::f64::consts::SQRT_2 / 3.0
}

/// `a₁ = √(2/3)`: a-priori cut-off on the clock rate, beyond which the
/// expected number of particles vanishes.
pub fn apriori_a() -> f64 {
    (2.0f64 / 3.0).sqrt()
}

/// Growth exponent of particles with clock `a t²` reaching `γ t^{3/2}`:
/// `φ(a) = 1 − 3a²/2 − γ²/(2a)`.
pub fn phi(a: f64, gamma: f64) -> Result<f64> {
    if !(a > 0.0) {
        return Err(Error::invalid(format!("phi needs a > 0, got {a}")));
    }
    Ok(1.0 - 1.5 * a * a - gamma * gamma / (2.0 * a))
}

/// Stationary point of `φ`: `a = (γ²/6)^{1/3}`.
pub fn optimal_a(gamma: f64) -> f64 {
    (gamma * gamma / 6.0).cbrt()
}

/// `M(γ) = max_a φ(a) = 1 − 9a²/2` at `a = optimal_a(γ)`.
pub fn rate_m(gamma: f64) -> f64 {
    let a = optimal_a(gamma);
    1.0 - 4.5 * a * a
}

fn check_time(s: f64, t: f64) -> Result<()> {
    if !(0.0..=t).contains(&s) {
        return Err(Error::invalid(format!("time {s} outside [0, {t}]")));
    }
    Ok(())
}

/// Optimal trait path `f̄(s) = 3a(s − s²/2t)`.
pub fn fbar(s: f64, a: f64, t: f64) -> Result<f64> {
    check_time(s, t)?;
    Ok(3.0 * a * (s - s * s / (2.0 * t)))
}

/// `f̄′(s) = 3a(1 − s/t)`.
pub fn fbar_prime(s: f64, a: f64, t: f64) -> Result<f64> {
    check_time(s, t)?;
    Ok(3.0 * a * (1.0 - s / t))
}

/// Dirichlet energy `∫₀ᵗ f̄′² = 3a²t`.
pub fn dirichlet_cost(a: f64, t: f64) -> f64 {
    3.0 * a * a * t
}

/// Predicted position at time `s` of a particle ending at `γ t^{3/2}`:
/// `(3γ/2)(s√t − s³/(3 t^{3/2}))`.
pub fn opt_spatial_traj(s: f64, gamma: f64, t: f64) -> Result<f64> {
    check_time(s, t)?;
    Ok(1.5 * gamma * (s * t.sqrt() - s.powi(3) / (3.0 * t.powf(1.5))))
}

/// `x(t) = (2^{5/4}/3) t^{3/2}`.
pub fn predict_front(t: f64) -> f64 {
    critical_gamma() * t.max(0.0).powf(1.5)
}

/// `θ(t) = (√2/2) t`.
pub fn predict_trait(t: f64) -> f64 {
    std::f64::consts::FRAC_1_SQRT_2 * t
}

/// `j(s) = ∫₀ˢ f̄(t−u) du = (3a/2)(ts − s³/3t)`.
pub fn j_integral(s: f64, a: f64, t: f64) -> Result<f64> {
    check_time(s, t)?;
    Ok(1.5 * a * (t * s - s.powi(3) / (3.0 * t)))
}

/// `∫₀ˢ f′(u)² du = 3a² s³ / t²` for the time-reversed path `f(u) = f̄(t−u)`.
pub fn fprime_sq_integral(s: f64, a: f64, t: f64) -> Result<f64> {
    check_time(s, t)?;
    Ok(3.0 * a * a * s.powi(3) / (t * t))
}

/// Exponent left over after the Girsanov weights of the two good events,
/// `ψ(x) = x(−1 + 3γ²/4a) + x³(3a²/2 − γ²/4a)`. Defined for any real `x`.
pub fn psi(x: f64, a: f64, gamma: f64) -> Result<f64> {
    let (lin, cub) = psi_coefficients(a, gamma)?;
    Ok(x * lin + x.powi(3) * cub)
}

/// Linear and cubic coefficients of `ψ`; the cubic one vanishes when `γ² = 6a³`.
pub fn psi_coefficients(a: f64, gamma: f64) -> Result<(f64, f64)> {
    if !(a > 0.0) {
        return Err(Error::invalid(format!("psi needs a > 0, got {a}")));
    }
    let g2 = gamma * gamma;
    Ok((-1.0 + 3.0 * g2 / (4.0 * a), 1.5 * a * a - g2 / (4.0 * a)))
}

/// Front exponent for mobility `θ^α`: `x ∼ t^{(2+α)/2}`.
pub fn alpha_exponent(alpha: f64) -> f64 {
    (2.0 + alpha) / 2.0
}

/// Bisection for a sign change of `f` on `[lo, hi]`.
pub fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64> {
    let (mut flo, fhi) = (f(lo), f(hi));
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(Error::invalid(format!("no sign change on [{lo}, {hi}]")));
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Constants attached to a front coefficient `γ` and horizon `t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TheoryConstants {
    pub gamma: f64,
    pub a: f64,
    pub gamma0: f64,
    pub a0: f64,
    #[serde(rename = "M")]
    pub m_rate: f64,
    pub t: f64,
    pub tau: f64,
    pub mu: f64,
    pub m: f64,
}

impl TheoryConstants {
    pub fn new(gamma: f64, t: f64) -> Result<Self> {
        if !(gamma > 0.0 && t > 0.0) {
            return Err(Error::invalid(format!("need gamma > 0 and t > 0, got {gamma}, {t}")));
        }
        let a = optimal_a(gamma);
        let tau = a * t * t;
        Ok(TheoryConstants {
            gamma,
            a,
            gamma0: critical_gamma(),
            a0: critical_a(),
            m_rate: rate_m(gamma),
            t,
            tau,
            mu: gamma * t.powf(1.5) / tau,
            m: 10.0 * t.sqrt(),
        })
    }
}

/// Uniformly spaced `(s, g(s))` samples on `[0, t]`.
pub fn curve(t: f64, points: usize, g: impl Fn(f64) -> f64) -> Vec<(f64, f64)> {
    let n = points.max(2);
    (0..n)
        .map(|k| {
            let s = if k == n - 1 { t } else { t * k as f64 / (n - 1) as f64 };
            (s, g(s))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    const SQ6: f64 = 2.449_489_742_783_178;

    // Independent quadrature for the integral identities.
    fn simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
        let n = n + n % 2;
        let h = (hi - lo) / n as f64;
        let mut s = f(lo) + f(hi);
        for k in 1..n {
            s += f(lo + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn critical_constants() {
        assert_abs_diff_eq!(critical_gamma(), 0.792_804_743_3, epsilon = 1e-10);
        assert_abs_diff_eq!(critical_gamma(), 2f64.powf(1.25) / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(rate_m(critical_gamma()), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(optimal_a(critical_gamma()), critical_a(), epsilon = 1e-12);
        assert_abs_diff_eq!(critical_a(), 0.471_404_520_8, epsilon = 1e-10);
    }

    #[test]
    fn phi_examples() {
        assert_abs_diff_eq!(phi(critical_a(), critical_gamma()).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(phi(0.5, 0.0).unwrap(), 0.625, epsilon = 1e-15);
        assert_abs_diff_eq!(phi(1.0, SQ6).unwrap(), -3.5, epsilon = 1e-12);
        assert!(phi(0.0, 1.0).is_err());
        assert!(phi(-1.0, 1.0).is_err());
    }

    #[test]
    fn optimal_a_and_rate_examples() {
        assert_eq!(optimal_a(0.0), 0.0);
        assert_abs_diff_eq!(optimal_a(SQ6), 1.0, epsilon = 1e-12);
        assert_eq!(rate_m(0.0), 1.0);
        assert_abs_diff_eq!(rate_m(SQ6), -3.5, epsilon = 1e-12);
    }

    #[test]
    fn fbar_examples() {
        let (a, t) = (0.37, 6.0);
        assert_eq!(fbar(0.0, a, t).unwrap(), 0.0);
        assert_abs_diff_eq!(fbar(t, a, t).unwrap(), 1.5 * a * t, epsilon = 1e-12);
        assert_abs_diff_eq!(fbar(t, critical_a(), t).unwrap(), std::f64::consts::FRAC_1_SQRT_2 * t, epsilon = 1e-12);
        assert!(fbar(-0.1, a, t).is_err());
        assert!(fbar(t + 0.1, a, t).is_err());
        // 10⁴-point trapezoid of f̄ against a t²
        let n = 10_000;
        let h = t / n as f64;
        let samples: Vec<f64> = (0..=n).map(|k| fbar((k as f64 * h).min(t), a, t).unwrap()).collect();
        let q = crate::grid::trapezoid_integral(&samples, h).unwrap();
        assert!((q / (a * t * t) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn cost_examples() {
        assert_eq!(dirichlet_cost(1.0, 1.0), 3.0);
        assert_eq!(dirichlet_cost(0.0, 5.0), 0.0);
        assert_abs_diff_eq!(dirichlet_cost(critical_a(), 10.0), 20.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn trajectory_examples() {
        let g = critical_gamma();
        assert_eq!(opt_spatial_traj(0.0, g, 4.0).unwrap(), 0.0);
        assert_abs_diff_eq!(opt_spatial_traj(4.0, g, 4.0).unwrap(), g * 8.0, epsilon = 1e-12);
        // (3γ₀/2)(2·2 − 8/(3·8)) = 1.5·γ₀·(11/3)
        assert_abs_diff_eq!(opt_spatial_traj(2.0, g, 4.0).unwrap(), 4.3604, epsilon = 1e-3);
        assert!(opt_spatial_traj(5.0, g, 4.0).is_err());
    }

    #[test]
    fn front_law_examples() {
        assert_eq!((predict_front(0.0), predict_trait(0.0)), (0.0, 0.0));
        assert_abs_diff_eq!(predict_front(1.0), 0.792_804_743, epsilon = 1e-9);
        assert_abs_diff_eq!(predict_trait(10.0), 7.071_07, epsilon = 1e-5);
        assert_abs_diff_eq!(predict_front(53.0), 305.90, epsilon = 0.01);
        assert_abs_diff_eq!(predict_trait(53.0), 37.477, epsilon = 1e-3);
    }

    #[test]
    fn partial_integral_examples() {
        let (a, t) = (0.8, 3.0);
        assert_abs_diff_eq!(j_integral(t, a, t).unwrap(), a * t * t, epsilon = 1e-12);
        assert_abs_diff_eq!(j_integral(0.5, 1.0, 1.0).unwrap(), 0.6875, epsilon = 1e-12);
        assert_abs_diff_eq!(fprime_sq_integral(t, a, t).unwrap(), dirichlet_cost(a, t), epsilon = 1e-12);
        assert!(j_integral(4.0, a, t).is_err());
        assert!(fprime_sq_integral(-1.0, a, t).is_err());
    }

    #[test]
    fn psi_examples() {
        let a: f64 = 0.3;
        let g = (6.0 * a * a * a).sqrt();
        assert_abs_diff_eq!(psi(1.0, a, g).unwrap(), -rate_m(g), epsilon = 1e-12);
        assert_abs_diff_eq!(psi(2.0, a, g).unwrap(), -1.19, epsilon = 1e-12);
        for k in 0..100 {
            let x = k as f64 / 99.0;
            assert!(psi(x, critical_a(), critical_gamma()).unwrap().abs() < 1e-12);
        }
        assert!(psi(0.5, 0.0, 1.0).is_err());
    }

    #[test]
    fn alpha_examples() {
        assert_eq!(alpha_exponent(1.0), 1.5);
        assert_eq!(alpha_exponent(2.0), 2.0);
        assert_eq!(alpha_exponent(0.5), 1.25);
    }

    #[test]
    fn constants_struct_is_consistent() {
        let c = TheoryConstants::new(critical_gamma(), 10.0).unwrap();
        assert_abs_diff_eq!(c.mu * c.tau, c.gamma * 10f64.powf(1.5), epsilon = 1e-10);
        assert_abs_diff_eq!(c.tau, c.a * 100.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.m, 10.0 * 10f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(c.gamma * c.gamma, 6.0 * c.a.powi(3), epsilon = 1e-12);
        assert_abs_diff_eq!(c.m_rate, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn phi_is_stationary_at_optimal_a() {
        let h = 1e-5;
        for &g in &[0.2, critical_gamma(), 1.5, 2.9] {
            let a = optimal_a(g);
            let slope = (phi(a + h, g).unwrap() - phi(a - h, g).unwrap()) / (2.0 * h);
            assert!(slope.abs() < 1e-6, "gamma {g}: slope {slope}");
        }
    }

    #[test]
    fn phi_at_optimum_equals_rate() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let g: f64 = rng.random_range(1e-3..3.0);
            assert_abs_diff_eq!(phi(optimal_a(g), g).unwrap(), rate_m(g), epsilon = 1e-10);
            // and it is the maximum over a
            let a = optimal_a(g);
            for f in [0.5, 0.9, 1.1, 2.0] {
                assert!(phi(a * f, g).unwrap() <= rate_m(g) + 1e-12);
            }
        }
    }

    #[test]
    fn rate_sign_change_at_critical_gamma() {
        let root = bisect(rate_m, 0.1, 2.0, 1e-14).unwrap();
        assert_abs_diff_eq!(root, critical_gamma(), epsilon = 1e-12);
    }

    #[test]
    fn fbar_endpoint_slopes() {
        let (a, t, h) = (0.6, 7.0, 1e-6);
        let d0 = (fbar(h, a, t).unwrap() - fbar(0.0, a, t).unwrap()) / h;
        let dt = (fbar(t, a, t).unwrap() - fbar(t - h, a, t).unwrap()) / h;
        assert_abs_diff_eq!(d0, 3.0 * a, epsilon = 1e-5);
        assert_abs_diff_eq!(dt, 0.0, epsilon = 1e-5);
    }

    #[test]
    fn quadratures_reproduce_partial_integrals() {
        let (a, t) = (0.45, 9.0);
        for &s in &[1.0, 4.5, 9.0] {
            let j = simpson(|u| fbar(t - u, a, t).unwrap(), 0.0, s, 2000);
            assert!((j / j_integral(s, a, t).unwrap() - 1.0).abs() < 1e-6);
            let fp = simpson(|u| fbar_prime(t - u, a, t).unwrap().powi(2), 0.0, s, 2000);
            assert!((fp / fprime_sq_integral(s, a, t).unwrap() - 1.0).abs() < 1e-6);
        }
        let cost = simpson(|u| fbar_prime(u, a, t).unwrap().powi(2), 0.0, t, 2000);
        assert!((cost / dirichlet_cost(a, t) - 1.0).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn trajectory_is_mu_times_clock(t in 0.5f64..50.0, frac in 0.0f64..1.0, g in 0.05f64..2.5) {
            let s = frac * t;
            let a = optimal_a(g);
            let mu = g * t.powf(1.5) / (a * t * t);
            let via_clock = mu * j_integral(s, a, t).unwrap();
            prop_assert!((opt_spatial_traj(s, g, t).unwrap() - via_clock).abs() <= 1e-9 * (1.0 + via_clock.abs()));
        }

        #[test]
        fn rate_is_strictly_decreasing(g1 in 0.0f64..3.0, dg in 1e-6f64..1.0) {
            prop_assert!(rate_m(g1 + dg) < rate_m(g1));
        }
    }
}
