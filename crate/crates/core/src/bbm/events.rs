//! The good events of the lower bound: the trait path tracks the optimal
//! parabola and the time-changed spatial path tracks a line of slope `μ`.

use serde::Serialize;

use super::SimOutput;
use crate::error::{Error, Result};
use crate::theory;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EventParams {
    pub a: f64,
    pub gamma: f64,
    pub t: f64,
    /// `a t²`
    pub tau: f64,
    /// `γ t^{3/2} / τ`
    pub mu: f64,
    /// `10 √t`
    pub m: f64,
}

impl EventParams {
    pub fn new(a: f64, gamma: f64, t: f64) -> Result<Self> {
        if !(a > 0.0 && gamma > 0.0 && t > 0.0) || !(a.is_finite() && gamma.is_finite() && t.is_finite()) {
            return Err(Error::invalid(format!("event parameters need a, gamma, t > 0, got ({a}, {gamma}, {t})")));
        }
        let tau = a * t * t;
        Ok(EventParams { a, gamma, t, tau, mu: gamma * t.powf(1.5) / tau, m: 10.0 * t.sqrt() })
    }

    /// `M_s = (t − s + 1/4)^{3/4}`
    pub fn envelope(&self, s: f64) -> f64 {
        (self.t - s + 0.25).max(0.0).powf(0.75)
    }

    /// `f̄(t − s)` on `[0, t − 1]`, then held at `max(f̄(1), 1/2)`.
    pub fn target(&self, s: f64) -> f64 {
        let fbar = |r: f64| 3.0 * self.a * (r - r * r / (2.0 * self.t));
        if self.t < 1.0 {
            return fbar(self.t - s).max(0.5);
        }
        if s <= self.t - 1.0 {
            fbar(self.t - s)
        } else {
            fbar(1.0).max(0.5)
        }
    }

    /// Initial trait on the optimal parabola, `3at/2`.
    pub fn theta_start(&self) -> f64 {
        theory::fbar(self.t, self.a, self.t).unwrap_or(1.5 * self.a * self.t)
    }
}

fn check_horizon(len: usize, dt: f64, t: f64) -> Result<()> {
    if len < 2 {
        return Err(Error::invalid("path needs at least two samples"));
    }
    let horizon = (len - 1) as f64 * dt;
    if (horizon - t).abs() > 1e-6 * t.max(1.0) {
        return Err(Error::invalid(format!("path horizon {horizon} does not match t = {t}")));
    }
    Ok(())
}

/// `|θ_s − f(s)| ≤ M_s` at every sample and `τ − t ≤ J ≤ τ`.
pub fn event_a_indicator(theta: &[f64], dt: f64, clock: f64, params: &EventParams) -> Result<bool> {
    check_horizon(theta.len(), dt, params.t)?;
    if !(params.tau - params.t <= clock && clock <= params.tau) {
        return Ok(false);
    }
    Ok(theta.iter().enumerate().all(|(k, &th)| {
        let s = k as f64 * dt;
        (th - params.target(s)).abs() <= params.envelope(s)
    }))
}

/// `sup_u (W̃_u − μu) ≤ m` and `|W̃_u − γ t^{3/2}| ≤ m` for `u ∈ [τ − t, τ]`,
/// over the samples `(u, W̃_u)`.
pub fn event_b_indicator(samples: &[(f64, f64)], params: &EventParams) -> Result<bool> {
    if samples.is_empty() {
        return Err(Error::invalid("empty time-changed path"));
    }
    if samples.windows(2).any(|w| w[1].0 < w[0].0) {
        return Err(Error::invalid("time-changed path must have non-decreasing clock"));
    }
    let target = params.gamma * params.t.powf(1.5);
    for &(u, w) in samples {
        if u > params.tau {
            break;
        }
        if w - params.mu * u > params.m {
            return Ok(false);
        }
        if u >= params.tau - params.t && (w - target).abs() > params.m {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Knots `(J_k, X_k)` of `W̃ = X ∘ K`, with `K` the piecewise-linear inverse
/// of the clock `∫|θ|`. Between knots `W̃` is linear.
pub fn time_changed_path(theta: &[f64], x: &[f64], dt: f64) -> Vec<(f64, f64)> {
    let mut clock = 0.0;
    let mut out = Vec::with_capacity(theta.len());
    out.push((0.0, x[0]));
    for k in 1..theta.len() {
        clock += 0.5 * (theta[k - 1].abs() + theta[k].abs()) * dt;
        out.push((clock, x[k]));
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GoodCount {
    pub count: usize,
    /// Final spatial position of every counted particle.
    pub x_final: Vec<f64>,
}

/// `Z = Σ 1{A_i ∩ B_i}` over the alive particles of a run with stored paths.
pub fn count_good_particles(out: &SimOutput, params: &EventParams) -> Result<GoodCount> {
    let paths = out.paths.as_ref().ok_or_else(|| Error::invalid("counting good particles needs stored paths"))?;
    let mut x_final = Vec::new();
    for k in 0..paths.len() {
        let path = paths.path(k);
        let clock: f64 = path.theta.windows(2).map(|w| 0.5 * (w[0].abs() + w[1].abs()) * path.dt).sum();
        if !event_a_indicator(&path.theta, path.dt, clock, params)? {
            continue;
        }
        let w = time_changed_path(&path.theta, &path.x, path.dt);
        if event_b_indicator(&w, params)? {
            x_final.push(*path.x.last().expect("non-empty path"));
        }
    }
    Ok(GoodCount { count: x_final.len(), x_final })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bbm::{simulate, BbmConfig, BoundaryRule};
    use crate::rng::MonteCarlo;

    fn a0() -> f64 {
        theory::critical_a()
    }

    #[test]
    fn envelope_and_target_bounds() {
        let p = EventParams::new(0.3, 0.8, 8.0).unwrap();
        assert!((p.envelope(8.0) - 0.25f64.powf(0.75)).abs() < 1e-15);
        assert!(p.envelope(8.0) < 0.5);
        for k in 0..=800 {
            assert!(p.target(k as f64 * 0.01) >= 0.5);
        }
        assert!((p.target(0.0) - 1.5 * 0.3 * 8.0).abs() < 1e-12);
        assert!((p.mu * p.tau - 0.8 * 8f64.powf(1.5)).abs() < 1e-12);
    }

    #[test]
    fn exact_parabola_satisfies_envelope() {
        let p = EventParams::new(0.3, theory::critical_gamma(), 6.0).unwrap();
        let dt = 0.01;
        let theta: Vec<f64> = (0..=600).map(|k| p.target(k as f64 * dt)).collect();
        assert!(event_a_indicator(&theta, dt, p.tau - 1.0, &p).unwrap());
        assert!(!event_a_indicator(&theta, dt, p.tau + 1.0, &p).unwrap());
        let mut shifted = theta.clone();
        shifted[0] += p.envelope(0.0) + 0.1;
        assert!(!event_a_indicator(&shifted, dt, p.tau - 1.0, &p).unwrap());
        assert!(event_a_indicator(&theta[..300], dt, p.tau, &p).is_err());
    }

    #[test]
    fn line_of_slope_mu_satisfies_b() {
        let t = 9.0;
        let p = EventParams::new(a0(), theory::critical_gamma(), t).unwrap();
        let line: Vec<(f64, f64)> = (0..=1000)
            .map(|k| {
                let u = p.tau * k as f64 / 1000.0;
                (u, p.mu * u)
            })
            .collect();
        assert!(event_b_indicator(&line, &p).unwrap());
        assert!((p.mu * t - p.gamma / p.a * t.sqrt()).abs() < 1e-12);
        assert!(p.gamma / p.a < 1.69);
    }

    #[test]
    fn flat_path_fails_b_once_target_is_far() {
        // |0 − γ t^{3/2}| > 10 √t needs γ t > 10
        let p = EventParams::new(a0(), theory::critical_gamma(), 16.0).unwrap();
        let flat: Vec<(f64, f64)> = (0..=100).map(|k| (p.tau * k as f64 / 100.0, 0.0)).collect();
        assert!(!event_b_indicator(&flat, &p).unwrap());
        let p = EventParams::new(a0(), theory::critical_gamma(), 1.0).unwrap();
        let flat: Vec<(f64, f64)> = (0..=100).map(|k| (p.tau * k as f64 / 100.0, 0.0)).collect();
        assert!(event_b_indicator(&flat, &p).unwrap());
    }

    #[test]
    fn time_change_knots() {
        let w = time_changed_path(&[1.0, 3.0, -1.0], &[0.0, 0.5, 0.7], 0.5);
        assert_eq!(w, vec![(0.0, 0.0), (1.0, 0.5), (2.0, 0.7)]);
    }

    #[test]
    fn far_start_gives_no_good_particles() {
        let p = EventParams::new(0.3, theory::critical_gamma(), 0.8).unwrap();
        let cfg = BbmConfig::new(0.8, BoundaryRule::Dirichlet0, 10.0).with_paths();
        let out = simulate(&cfg).unwrap();
        assert_eq!(count_good_particles(&out, &p).unwrap().count, 0);
        assert!(
            count_good_particles(&simulate(&BbmConfig::new(0.8, BoundaryRule::Dirichlet0, 10.0)).unwrap(), &p).is_err()
        );
    }

    #[test]
    fn good_particles_exist_and_lead() {
        let t = 10.0;
        let p = EventParams::new(a0(), theory::critical_gamma(), t).unwrap();
        let mc = MonteCarlo::new(200, 77);
        let counts = mc.run(|_, spec| {
            let cfg = BbmConfig::new(t, BoundaryRule::Dirichlet0, p.theta_start()).with_rng(spec).with_paths();
            count_good_particles(&simulate(&cfg).unwrap(), &p).unwrap()
        });
        let positive = counts.iter().filter(|c| c.count > 0).count();
        assert!(positive > 0);
        // counted particles end within m (plus one clock step of slack) of the target
        let floor = p.gamma * t.powf(1.5) - p.m - 1.0;
        for c in &counts {
            assert!(c.x_final.iter().all(|&x| x >= floor), "{:?}", c.x_final);
        }
    }
}
