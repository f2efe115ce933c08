//! Cross-validation of the PDE solver against branching Brownian motion
//! through the McKean representation
//!
//! ```text
//! u(t, x, θ) = 1 − E^{(x,θ)} ∏_i (1 − u₀(X_t^i, θ_t^i))
//! ```
//!
//! For indicator data `u₀ = 1{x ≤ 0} 1{0 < θ < 1}` the right-hand side is the
//! probability that some particle ends in the block. Particles are started
//! at `x = 0` and translated, so one batch of trees serves every probe with
//! the same trait.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::bbm::{simulate, BbmConfig, BoundaryRule};
use crate::error::{Error, Result};
use crate::grid::{Grid, ModelConfig, ThetaBoundary};
use crate::pde::{run, InitialCondition, RunOptions};
use crate::rng::MonteCarlo;
use crate::stats::{z_score, Estimate};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DualityConfig {
    pub mc_dt: f64,
    pub z_threshold: f64,
    /// Largest acceptable Monte Carlo standard error.
    pub max_se: f64,
    pub boundary: BoundaryRule,
    pub pde_boundary: ThetaBoundary,
    /// PDE domain for the trait-structured check: `x ∈ [−w, w]`, `θ ∈ [0, θ_max]`.
    pub x_half_width: f64,
    pub theta_max: f64,
    pub dx: f64,
    pub dtheta: f64,
    /// 1D Fisher-KPP reference grid.
    pub kpp_half_width: f64,
    pub kpp_dx: f64,
    pub safety: f64,
}

impl Default for DualityConfig {
    fn default() -> Self {
        DualityConfig {
            mc_dt: 1e-3,
            z_threshold: 3.0,
            max_se: 0.05,
            boundary: BoundaryRule::Dirichlet0,
            pde_boundary: ThetaBoundary::Dirichlet,
            x_half_width: 12.0,
            theta_max: 8.0,
            dx: 0.05,
            dtheta: 0.025,
            kpp_half_width: 15.0,
            kpp_dx: 0.02,
            safety: 0.5,
        }
    }
}

impl DualityConfig {
    pub fn neumann() -> Self {
        DualityConfig { boundary: BoundaryRule::Neumann0, pde_boundary: ThetaBoundary::Neumann, ..Self::default() }
    }

    fn check_rules(&self) -> Result<()> {
        match (self.boundary, self.pde_boundary) {
            (BoundaryRule::Dirichlet0, ThetaBoundary::Dirichlet) | (BoundaryRule::Neumann0, ThetaBoundary::Neumann) => {
                Ok(())
            }
            (b, p) => Err(Error::invalid(format!("boundary rules do not match: particles use {b:?}, PDE uses {p:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbeRow {
    pub t: f64,
    pub x: f64,
    /// `None` for the 1D Fisher-KPP check.
    pub theta: Option<f64>,
    pub u_pde: f64,
    pub u_mc: f64,
    pub se: f64,
    pub z: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DualityReport {
    pub rows: Vec<ProbeRow>,
    pub z_threshold: f64,
    pub replicates: usize,
}

impl DualityReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn max_abs_z(&self) -> f64 {
        self.rows.iter().fold(0.0, |m, r| m.max(r.z.abs()))
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "probe,t,x,theta,u_pde,u_mc,se,z,pass")?;
        for (k, r) in self.rows.iter().enumerate() {
            let theta = r.theta.map(|v| v.to_string()).unwrap_or_default();
            writeln!(w, "{k},{},{},{theta},{},{},{},{},{}", r.t, r.x, r.u_pde, r.u_mc, r.se, r.z, r.pass)?;
        }
        Ok(())
    }
}

/// Explicit solver for `∂t u = ½ ∂²x u + u(1 − u)` with reflecting walls.
#[derive(Clone, Debug, PartialEq)]
pub struct Kpp1d {
    pub x_min: f64,
    pub dx: f64,
    pub values: Vec<f64>,
}

impl Kpp1d {
    /// Solution at time `t` from `1{x ≤ 0}` (cell averages) on `[−w, w]`.
    pub fn solve(half_width: f64, dx: f64, t: f64, safety: f64) -> Result<Kpp1d> {
        if !(half_width > 0.0 && dx > 0.0 && t >= 0.0 && safety > 0.0 && safety <= 1.0) {
            return Err(Error::invalid("1D KPP solver needs w > 0, dx > 0, t >= 0 and safety in (0, 1]"));
        }
        let n = (2.0 * half_width / dx).round() as usize + 1;
        let dx = 2.0 * half_width / (n - 1) as f64;
        let x_min = -half_width;
        let mut u: Vec<f64> = (0..n)
            .map(|i| {
                let x = x_min + i as f64 * dx;
                (0.5 - x / dx).clamp(0.0, 1.0)
            })
            .collect();
        let dt_max = safety / (1.0 / (dx * dx) + 1.0);
        let steps = (t / dt_max).ceil() as usize;
        let dt = if steps == 0 { 0.0 } else { t / steps as f64 };
        let c = 0.5 * dt / (dx * dx);
        let mut next = u.clone();
        for _ in 0..steps {
            for i in 0..n {
                let l = if i == 0 { u[1] } else { u[i - 1] };
                let r = if i == n - 1 { u[n - 2] } else { u[i + 1] };
                next[i] = u[i] + c * (l - 2.0 * u[i] + r) + dt * u[i] * (1.0 - u[i]);
            }
            std::mem::swap(&mut u, &mut next);
        }
        Ok(Kpp1d { x_min, dx, values: u })
    }

    pub fn at(&self, x: f64) -> Option<f64> {
        let pos = (x - self.x_min) / self.dx;
        let n = self.values.len();
        if !(0.0..=(n - 1) as f64).contains(&pos) {
            return None;
        }
        let k = (pos.floor() as usize).min(n - 2);
        let s = pos - k as f64;
        Some(self.values[k] * (1.0 - s) + self.values[k + 1] * s)
    }
}

fn row(t: f64, x: f64, theta: Option<f64>, u_pde: f64, est: Estimate, z_threshold: f64) -> ProbeRow {
    // all-equal outcomes give se = 0; floor at one replicate's weight
    let se_eff = if est.n > 0 { est.se.max(1.0 / est.n as f64) } else { est.se };
    let z = if t == 0.0 { z_score(u_pde - est.mean, est.se) } else { z_score(u_pde - est.mean, se_eff) };
    ProbeRow { t, x, theta, u_pde, u_mc: est.mean, se: est.se, z, pass: z.abs() < z_threshold }
}

/// Monte Carlo estimates of `P(min_i X_i ≤ −x)` for every `x`, from trees
/// of 1D branching Brownian motion started at 0.
fn kpp_mc(t: f64, xs: &[f64], dt: f64, mc: &MonteCarlo) -> Vec<Estimate> {
    let steps = if t == 0.0 { 0 } else { (t / dt).ceil() as usize };
    let h = if steps == 0 { 0.0 } else { t / steps as f64 };
    let q = -(-h).exp_m1();
    let mins = mc.run(|_, spec| {
        let mut rng = spec.rng();
        let mut xs_p = vec![0.0f64];
        for _ in 0..steps {
            for p in xs_p.iter_mut() {
                let g: f64 = rng.sample(StandardNormal);
                *p += h.sqrt() * g;
            }
            let n = xs_p.len();
            for k in 0..n {
                let u: f64 = 1.0 - rng.random::<f64>();
                if u <= q {
                    let extra = (u.ln() / q.ln()).floor() as usize;
                    for _ in 0..extra {
                        xs_p.push(xs_p[k]);
                    }
                }
            }
        }
        xs_p.into_iter().fold(f64::INFINITY, f64::min)
    });
    xs.iter()
        .map(|&x| {
            let hits: Vec<f64> = mins.iter().map(|&m| if m + x <= 0.0 { 1.0 } else { 0.0 }).collect();
            Estimate::from_samples(&hits)
        })
        .collect()
}

/// Fisher-KPP check: `u(t, x)` from the 1D solver against `1 − E ∏ 1{X_i > 0}`.
pub fn duality_check_kpp(t: f64, x_points: &[f64], mc: &MonteCarlo, config: &DualityConfig) -> Result<DualityReport> {
    if !(0.0..=3.0).contains(&t) {
        return Err(Error::invalid(format!("duality checks need 0 <= t <= 3, got {t}")));
    }
    if x_points.iter().any(|x| x.abs() > config.kpp_half_width) {
        return Err(Error::invalid("probe outside the 1D solver domain"));
    }
    let pde = Kpp1d::solve(config.kpp_half_width, config.kpp_dx, t, config.safety)?;
    let est = kpp_mc(t, x_points, config.mc_dt, mc);
    let mut rows = Vec::with_capacity(x_points.len());
    for (&x, e) in x_points.iter().zip(est) {
        if e.se > config.max_se {
            return Err(Error::Precision(format!(
                "standard error {:.3} above {} at x = {x}; add replicates",
                e.se, config.max_se
            )));
        }
        let u_pde = if t == 0.0 {
            if x <= 0.0 {
                1.0
            } else {
                0.0
            }
        } else {
            pde.at(x).expect("probe checked")
        };
        rows.push(row(t, x, None, u_pde, e, config.z_threshold));
    }
    Ok(DualityReport { rows, z_threshold: config.z_threshold, replicates: mc.replicates })
}

fn block(x: f64, theta: f64) -> f64 {
    if x <= 0.0 && theta > 0.0 && theta < 1.0 {
        1.0
    } else {
        0.0
    }
}

/// Trait-structured check: the local model in shifted coordinates
/// (`θ ≥ 0`, mobility `θ/2`) against the branching system.
pub fn duality_check_toads(
    t: f64,
    probes: &[(f64, f64)],
    mc: &MonteCarlo,
    config: &DualityConfig,
) -> Result<DualityReport> {
    config.check_rules()?;
    if !(0.0..=3.0).contains(&t) {
        return Err(Error::invalid(format!("duality checks need 0 <= t <= 3, got {t}")));
    }
    for &(x, theta) in probes {
        if x.abs() > config.x_half_width || !(0.0..=config.theta_max).contains(&theta) {
            return Err(Error::invalid(format!("probe ({x}, {theta}) outside the PDE domain")));
        }
        if config.boundary == BoundaryRule::Dirichlet0 && theta <= 0.0 {
            return Err(Error::invalid("Dirichlet probes need theta > 0"));
        }
    }

    let pde_field = if t > 0.0 {
        let nx = (2.0 * config.x_half_width / config.dx).round() as usize + 1;
        let nt = (config.theta_max / config.dtheta).round() as usize + 1;
        let grid = Grid::new(-config.x_half_width, config.x_half_width, 0.0, config.theta_max, nx, nt)?;
        let model = ModelConfig { theta_boundary: config.pde_boundary, ..ModelConfig::local() };
        let initial = InitialCondition::HeavisideBlock { theta_lo: 0.0, theta_hi: 1.0, x_edge: 0.0 };
        let mut opts = RunOptions::new(t);
        opts.safety = config.safety;
        opts.exec = mc.exec;
        Some(run(&model, &grid, &initial, &opts)?.final_snapshot().field.clone())
    } else {
        None
    };

    let mut thetas: Vec<f64> = probes.iter().map(|p| p.1).collect();
    thetas.sort_by(f64::total_cmp);
    thetas.dedup();
    let mut rows = Vec::with_capacity(probes.len());
    let mut by_theta = Vec::with_capacity(thetas.len());
    for (k, &theta) in thetas.iter().enumerate() {
        let base = BbmConfig::new(t, config.boundary, theta).with_dt(config.mc_dt);
        let mcs = mc.relabel(k as u64 + 1);
        let finals = mcs.run(|_, spec| simulate(&base.clone().with_rng(spec)).map(|o| o.population.particles));
        let mut in_band_min = Vec::with_capacity(finals.len());
        for f in finals {
            let f = f?;
            // smallest X among particles whose (mirrored) trait lies in (0, 1)
            let m = f
                .iter()
                .filter(|p| {
                    let th = p.theta.abs();
                    th > 0.0 && th < 1.0
                })
                .map(|p| p.x)
                .fold(f64::INFINITY, f64::min);
            in_band_min.push(m);
        }
        by_theta.push(in_band_min);
    }

    for &(x, theta) in probes {
        let k = thetas.iter().position(|&v| v == theta).expect("theta listed");
        let hits: Vec<f64> = by_theta[k].iter().map(|&m| if m + x <= 0.0 { 1.0 } else { 0.0 }).collect();
        let est = Estimate::from_samples(&hits);
        if est.se > config.max_se {
            return Err(Error::Precision(format!(
                "standard error {:.3} above {} at ({x}, {theta}); add replicates",
                est.se, config.max_se
            )));
        }
        let u_pde = match &pde_field {
            Some(f) => f.interpolate(x, theta).expect("probe checked"),
            None => block(x, theta),
        };
        rows.push(row(t, x, Some(theta), u_pde, est, config.z_threshold));
    }
    Ok(DualityReport { rows, z_threshold: config.z_threshold, replicates: mc.replicates })
}
