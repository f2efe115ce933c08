//! Monte Carlo checks of the moment identities and path lemmas.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::{simulate, BbmConfig, BoundaryRule, Particle, Population};
use crate::error::{Error, Result};
use crate::rng::MonteCarlo;
use crate::stats::{self, Estimate};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ManyToOne {
    /// Mean of `Σ_i g(particle_i)` over trees.
    pub lhs: Estimate,
    /// `e^t` times the mean of `g` over single paths.
    pub rhs: Estimate,
    pub z: f64,
}

/// Compares `E[Σ_i g(i)]` over branching trees with `e^{rt} E[g]` over
/// single paths. `g` sees the terminal state of each alive particle.
pub fn many_to_one_check<G>(base: &BbmConfig, g: G, trees: &MonteCarlo, single_paths: usize) -> Result<ManyToOne>
where
    G: Fn(&Particle) -> f64 + Sync,
{
    base.validate()?;
    if base.t > 6.0 {
        return Err(Error::invalid(format!("many-to-one check limited to t <= 6, got {}", base.t)));
    }
    let eval = |ps: &[Particle]| -> Result<f64> {
        let mut sum = 0.0;
        for p in ps {
            let v = g(p);
            if !v.is_finite() {
                return Err(Error::invalid(format!("g returned non-finite value {v}")));
            }
            sum += v;
        }
        Ok(sum)
    };
    let lhs = trees.run(|_, spec| eval(&simulate(&base.clone().with_rng(spec))?.population.particles));
    let lhs: Vec<f64> = lhs.into_iter().collect::<Result<_>>()?;
    let singles = trees.relabel(1).with_replicates(single_paths);
    let rhs = singles.run(|_, spec| eval(&simulate(&base.clone().with_rng(spec).single_path())?.population.particles));
    let rhs: Vec<f64> = rhs.into_iter().collect::<Result<_>>()?;
    let lhs = Estimate::from_samples(&lhs);
    let rhs = Estimate::from_samples(&rhs).scale((base.branch_rate * base.t).exp());
    Ok(ManyToOne { lhs, rhs, z: lhs.z_against(&rhs) })
}

/// Alive particles with `a t² ≤ clock ≤ (a + h) t²` and `θ_t < 1`.
pub fn count_clock_band(population: &Population, a: f64, h: f64, t: f64) -> Result<usize> {
    if !(h > 0.0) {
        return Err(Error::invalid(format!("band width h must be > 0, got {h}")));
    }
    let (lo, hi) = (a * t * t, (a + h) * t * t);
    Ok(population.particles.iter().filter(|p| p.alive && p.theta < 1.0 && p.clock >= lo && p.clock <= hi).count())
}

/// `P(lo ≤ ∫₀ᵗ θ ≤ hi, θ_t < cap)` for a free Brownian trait started at
/// `theta0`, from the joint Gaussian law of `(θ_t, ∫θ)`.
pub fn clock_band_gaussian(theta0: f64, t: f64, lo: f64, hi: f64, cap: f64) -> f64 {
    let sd_end = t.sqrt();
    let sd_cond = (t.powi(3) / 12.0).sqrt();
    let integrand = |y: f64| {
        let density = (-(y - theta0).powi(2) / (2.0 * t)).exp() / (sd_end * (2.0 * std::f64::consts::PI).sqrt());
        let mean = theta0 * t + 0.5 * t * (y - theta0);
        let band = stats::normal_cdf((hi - mean) / sd_cond) - stats::normal_cdf((lo - mean) / sd_cond);
        density * band.max(0.0)
    };
    let y_lo = theta0 - 12.0 * sd_end;
    if cap <= y_lo {
        return 0.0;
    }
    stats::simpson(integrand, y_lo, cap.min(theta0 + 12.0 * sd_end), 4000)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ClockBandExponent {
    pub mean_count: Estimate,
    /// `(1/t) log E|Ĩ_t(a)|`; `-∞` when no particle was ever counted.
    pub exponent: f64,
    /// `1 − 3a²/2`
    pub target: f64,
    pub theta0: f64,
}

/// Monte Carlo estimate of the growth exponent of the clock-band count.
pub fn clock_band_exponent(base: &BbmConfig, a: f64, h: f64, trees: &MonteCarlo) -> Result<ClockBandExponent> {
    base.validate()?;
    count_clock_band(&Population { t: 0.0, particles: Vec::new(), killed: 0 }, a, h, base.t)?;
    let counts = trees.run(|_, spec| -> Result<f64> {
        let out = simulate(&base.clone().with_rng(spec))?;
        Ok(count_clock_band(&out.population, a, h, base.t)? as f64)
    });
    let counts: Vec<f64> = counts.into_iter().collect::<Result<_>>()?;
    let mean_count = Estimate::from_samples(&counts);
    let exponent = if mean_count.mean > 0.0 { mean_count.mean.ln() / base.t } else { f64::NEG_INFINITY };
    Ok(ClockBandExponent { mean_count, exponent, target: 1.0 - 1.5 * a * a, theta0: base.theta0 })
}

/// Variance of `∫₀ᵗ W ds` (trapezoid along Euler paths) with the standard
/// error of the variance estimate.
pub fn integrated_bm_variance(t: f64, dt: f64, paths: &MonteCarlo) -> Result<Estimate> {
    if !(t > 0.0 && dt > 0.0) {
        return Err(Error::invalid(format!("need t > 0 and dt > 0, got ({t}, {dt})")));
    }
    let n = (t / dt).round().max(1.0) as usize;
    let h = t / n as f64;
    let sh = h.sqrt();
    let samples = paths.run(|_, spec| {
        let mut rng = spec.rng();
        let (mut w, mut integral) = (0.0f64, 0.0f64);
        for _ in 0..n {
            let g: f64 = rng.sample(StandardNormal);
            let next = w + sh * g;
            integral += 0.5 * (w + next) * h;
            w = next;
        }
        integral
    });
    let (var, se) = stats::variance_with_se(&samples);
    Ok(Estimate { mean: var, se, n: samples.len() })
}

/// Joint density of `(S_T, W_T)` for standard Brownian motion,
/// `2(2b − a) / (√(2π) T^{3/2}) · exp(−(2b − a)² / 2T)` on `a ≤ b, b ≥ 0`.
pub fn reflection_density(b: f64, a_pt: f64, t: f64) -> f64 {
    if a_pt > b || b < 0.0 || !(t > 0.0) {
        return 0.0;
    }
    let r = 2.0 * b - a_pt;
    2.0 * r / ((2.0 * std::f64::consts::PI).sqrt() * t.powf(1.5)) * (-r * r / (2.0 * t)).exp()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReflectionCheck {
    /// Quadrature of the density over its whole support.
    pub normalization: f64,
    pub chi2: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// χ² comparison of a Monte Carlo histogram of `(S_T, W_T)` with cell
/// masses obtained by quadrature of [`reflection_density`].
///
/// Paths are sampled on `steps` points; the running maximum uses the exact
/// Brownian-bridge maximum between consecutive samples.
pub fn reflection_histogram_check(
    t: f64,
    steps: usize,
    bin: f64,
    cap: f64,
    paths: &MonteCarlo,
) -> Result<ReflectionCheck> {
    if !(t > 0.0 && bin > 0.0 && cap > bin) || steps == 0 {
        return Err(Error::invalid("reflection check needs t > 0, steps > 0 and cap > bin > 0"));
    }
    let nb = (cap / bin).round() as usize;
    let cap = nb as f64 * bin;
    let reach = 12.0 * t.sqrt();
    let dens = |b: f64, a: f64| reflection_density(b, a, t);
    let cell = |i: usize, l: usize| {
        let (alo, ahi) = (i as f64 * bin, (i + 1) as f64 * bin);
        stats::simpson(
            |b| {
                let top = ahi.min(b);
                if top <= alo {
                    0.0
                } else {
                    stats::simpson(|a| dens(b, a), alo, top, 60)
                }
            },
            l as f64 * bin,
            (l + 1) as f64 * bin,
            120,
        )
    };
    let positive = stats::simpson(|b| stats::simpson(|a| dens(b, a), 0.0, b, 200), 0.0, reach, 2000);
    let negative = stats::simpson(|b| stats::simpson(|a| dens(b, a), -reach, 0.0, 400), 0.0, reach, 2000);

    // cells: (i, l) with i ≤ l < nb, then the b ≥ cap tail, then W_T < 0
    let index = |i: usize, l: usize| l * (l + 1) / 2 + i;
    let n_tri = nb * (nb + 1) / 2;
    let mut expected = vec![0.0; n_tri + 2];
    for l in 0..nb {
        for i in 0..=l {
            expected[index(i, l)] = cell(i, l);
        }
    }
    expected[n_tri] = positive - expected[..n_tri].iter().sum::<f64>();
    expected[n_tri + 1] = negative;

    let h = t / steps as f64;
    let sh = h.sqrt();
    let draws = paths.run(|_, spec| {
        let mut rng = spec.rng();
        let (mut w, mut s) = (0.0f64, 0.0f64);
        for _ in 0..steps {
            let g: f64 = rng.sample(StandardNormal);
            let next = w + sh * g;
            let u: f64 = 1.0 - rng.random::<f64>();
            let bridge_max = 0.5 * (w + next + ((next - w).powi(2) - 2.0 * h * u.ln()).sqrt());
            s = s.max(bridge_max);
            w = next;
        }
        (s, w)
    });
    let mut observed = vec![0.0; n_tri + 2];
    for &(s, w) in &draws {
        let k = if w < 0.0 {
            n_tri + 1
        } else if s >= cap {
            n_tri
        } else {
            let l = ((s / bin) as usize).min(nb - 1);
            let i = ((w / bin) as usize).min(l);
            index(i, l)
        };
        observed[k] += 1.0;
    }
    let n = draws.len() as f64;
    let (mut chi2, mut cells) = (0.0, 0usize);
    let (mut pooled_o, mut pooled_e) = (0.0, 0.0);
    for (o, e) in observed.iter().zip(&expected) {
        let e = e * n;
        if e >= 5.0 {
            chi2 += (o - e).powi(2) / e;
            cells += 1;
        } else {
            pooled_o += o;
            pooled_e += e;
        }
    }
    if pooled_e >= 5.0 {
        chi2 += (pooled_o - pooled_e).powi(2) / pooled_e;
        cells += 1;
    }
    let dof = cells.saturating_sub(1).max(1);
    Ok(ReflectionCheck { normalization: positive + negative, chi2, dof, p_value: stats::chi_square_p_value(chi2, dof) })
}

/// `P_{x0}(j − width ≤ ∫₀ᵗ θ ≤ j, |θ_t| ≤ 1)` for a free Brownian trait,
/// sampling `(θ_t, ∫θ)` exactly from their joint Gaussian law.
pub fn bridge_clock_probability(x0: f64, j: f64, width: f64, t: f64, paths: &MonteCarlo) -> Result<Estimate> {
    if !(width >= 0.0 && t > 0.0) {
        return Err(Error::invalid(format!("need width >= 0 and t > 0, got ({width}, {t})")));
    }
    // W_t = √t Z1 ; ∫W = t^{3/2}(Z1/2 + Z2/√12)
    let hits = paths.run(|_, spec| {
        let mut rng = spec.rng();
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        let end = x0 + t.sqrt() * z1;
        let clock = x0 * t + t.powf(1.5) * (0.5 * z1 + z2 / 12f64.sqrt());
        if end.abs() <= 1.0 && clock >= j - width && clock <= j {
            1.0
        } else {
            0.0
        }
    });
    Ok(Estimate::from_samples(&hits))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DubinsSchwarz {
    pub ks: f64,
    pub p_value: f64,
    pub increments: usize,
}

/// Normality of the increments of `W̃ = X ∘ K` over equal clock spans for
/// single non-branching particles.
pub fn dubins_schwarz_check(theta0: f64, t: f64, dt: f64, span: f64, paths: &MonteCarlo) -> Result<DubinsSchwarz> {
    if !(span > 0.0) {
        return Err(Error::invalid("clock span must be > 0"));
    }
    let base = BbmConfig::new(t, BoundaryRule::Neumann0, theta0).with_dt(dt).single_path().with_paths();
    let per_path = paths.run(|_, spec| -> Result<Vec<f64>> {
        let out = simulate(&base.clone().with_rng(spec))?;
        let store = out.paths.expect("paths requested");
        let path = store.path(0);
        let knots = super::time_changed_path(&path.theta, &path.x, path.dt);
        let total = knots.last().map(|k| k.0).unwrap_or(0.0);
        let count = (total / span).floor() as usize;
        let mut values = Vec::with_capacity(count + 1);
        let mut k = 0;
        for c in 0..=count {
            let u = c as f64 * span;
            while k + 1 < knots.len() && knots[k + 1].0 < u {
                k += 1;
            }
            let (u0, w0) = knots[k];
            let (u1, w1) = knots[(k + 1).min(knots.len() - 1)];
            let w = if u1 > u0 { w0 + (w1 - w0) * (u - u0) / (u1 - u0) } else { w0 };
            values.push(w);
        }
        Ok(values.windows(2).map(|w| (w[1] - w[0]) / span.sqrt()).collect())
    });
    let mut incs = Vec::new();
    for v in per_path {
        incs.extend(v?);
    }
    if incs.is_empty() {
        return Err(Error::invalid("no complete clock spans; increase t or reduce span"));
    }
    let ks = stats::ks_statistic(&incs, stats::normal_cdf);
    Ok(DubinsSchwarz { ks, p_value: stats::ks_p_value(ks, incs.len()), increments: incs.len() })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ManyToTwo {
    /// Direct tree estimate of `E[Z²]`, `Z = #{i : θ_t^i > 0}`.
    pub direct: Estimate,
    /// `E[Z] + 2 ∫₀ᵗ e^{2(t−s)} e^s P(B₁ ∈ A, B₂ ∈ A) ds` by nested sampling.
    pub decomposition: Estimate,
    pub z: f64,
}

/// Second-moment identity for `F = 1{θ_t > 0}`, trait started at 0 on the
/// free line. The split time is drawn from `Exp(1)` truncated to `[0, t]`.
pub fn many_to_two_check(t: f64, dt: f64, trees: &MonteCarlo, nested: usize) -> Result<ManyToTwo> {
    if !(t > 0.0 && t <= 3.0) {
        return Err(Error::invalid(format!("many-to-two check limited to 0 < t <= 3, got {t}")));
    }
    let base = BbmConfig::new(t, BoundaryRule::Neumann0, 0.0).with_dt(dt);
    base.validate()?;
    let z2 = trees.run(|_, spec| -> Result<f64> {
        let out = simulate(&base.clone().with_rng(spec))?;
        let z = out.population.particles.iter().filter(|p| p.theta > 0.0).count() as f64;
        Ok(z * z)
    });
    let z2: Vec<f64> = z2.into_iter().collect::<Result<_>>()?;
    let direct = Estimate::from_samples(&z2);

    let mass = -(-t).exp_m1();
    let samples = trees.relabel(2).with_replicates(nested).run(|_, spec| {
        let mut rng = spec.rng();
        let single = {
            let g: f64 = rng.sample(StandardNormal);
            if t.sqrt() * g > 0.0 {
                1.0
            } else {
                0.0
            }
        };
        let u: f64 = rng.random();
        let s = -(1.0 - u * mass).ln();
        let g0: f64 = rng.sample(StandardNormal);
        let g1: f64 = rng.sample(StandardNormal);
        let g2: f64 = rng.sample(StandardNormal);
        let shared = s.sqrt() * g0;
        let rest = (t - s).max(0.0).sqrt();
        let pair = if shared + rest * g1 > 0.0 && shared + rest * g2 > 0.0 { 1.0 } else { 0.0 };
        t.exp() * single + 2.0 * (2.0 * t).exp() * mass * pair
    });
    let decomposition = Estimate::from_samples(&samples);
    Ok(ManyToTwo { direct, decomposition, z: direct.z_against(&decomposition) })
}

/// Mean of `e^{−t} N_t` at each requested time, from one batch of trees.
pub fn population_martingale(times: &[f64], dt: f64, trees: &MonteCarlo) -> Result<Vec<(f64, Estimate)>> {
    let horizon = times.iter().copied().fold(0.0, f64::max);
    let mut base = BbmConfig::new(horizon, BoundaryRule::Neumann0, 0.0).with_dt(dt);
    base.snapshot_times = times.to_vec();
    base.validate()?;
    let runs = trees.run(|_, spec| -> Result<Vec<f64>> {
        let out = simulate(&base.clone().with_rng(spec))?;
        Ok(out.snapshots.iter().map(|p| (-p.t).exp() * p.len() as f64).collect())
    });
    let runs: Vec<Vec<f64>> = runs.into_iter().collect::<Result<_>>()?;
    Ok(times
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let col: Vec<f64> = runs.iter().map(|r| r[k]).collect();
            (t, Estimate::from_samples(&col))
        })
        .collect())
}
