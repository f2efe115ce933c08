//! Explicit finite-difference solver for the local and non-local models
//!
//! ```text
//! ∂t v = (θ^α/2) ∂²x v + (1/2) ∂²θ v + v (1 − C[v])
//! ```
//!
//! with `C[v] = v` (local) or the trait-window integral of `v` (non-local).
//! Centered second differences, forward Euler in time, mirror ghost nodes
//! for the Neumann walls.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid, ModelConfig, ModelKind, ThetaBoundary};
use crate::par::Execution;

/// Largest stable forward-Euler step:
/// `safety / (max θ^α / dx² + 1/dθ² + R)`, where `R ≥ 1` bounds the
/// reaction stiffness.
pub fn stable_dt(grid: &Grid, config: &ModelConfig, safety: f64, reaction_bound: f64) -> f64 {
    let mobility = grid.theta_min.abs().powf(config.alpha).max(grid.theta_max.abs().powf(config.alpha));
    safety / (mobility / (grid.dx * grid.dx) + 1.0 / (grid.dtheta * grid.dtheta) + reaction_bound.max(1.0))
}

/// Initial data.
#[derive(Clone, Debug, PartialEq)]
pub enum InitialCondition {
    /// `1{x ≤ x_edge} · 1{theta_lo ≤ θ < theta_hi}`, sampled as cell averages
    /// so that discontinuities sit at their exact location on average.
    HeavisideBlock {
        theta_lo: f64,
        theta_hi: f64,
        x_edge: f64,
    },
    Custom(Field),
}

impl InitialCondition {
    /// The block `1{x ≤ 0} · 1{1 ≤ θ < 2}`.
    pub fn standard_block() -> Self {
        InitialCondition::HeavisideBlock { theta_lo: 1.0, theta_hi: 2.0, x_edge: 0.0 }
    }

    pub fn sample(&self, grid: &Grid) -> Result<Field> {
        match self {
            InitialCondition::HeavisideBlock { theta_lo, theta_hi, x_edge } => {
                if !(theta_lo < theta_hi) || !x_edge.is_finite() {
                    return Err(Error::invalid(format!(
                        "block needs theta_lo < theta_hi and finite x_edge, got ({theta_lo}, {theta_hi}, {x_edge})"
                    )));
                }
                if *theta_lo < grid.theta_min {
                    return Err(Error::invalid(format!(
                        "block starts at theta {theta_lo} below the grid's theta_min {}",
                        grid.theta_min
                    )));
                }
                let fx: Vec<f64> = (0..grid.nx)
                    .map(|i| cell_fraction(grid.x(i), grid.dx, grid.x_min, grid.x_max, f64::NEG_INFINITY, *x_edge))
                    .collect();
                let ft: Vec<f64> = (0..grid.ntheta)
                    .map(|j| {
                        cell_fraction(grid.theta(j), grid.dtheta, grid.theta_min, grid.theta_max, *theta_lo, *theta_hi)
                    })
                    .collect();
                let mut values = Vec::with_capacity(grid.len());
                for wx in &fx {
                    values.extend(ft.iter().map(|wt| wx * wt));
                }
                Field::from_values(grid, values)
            }
            InitialCondition::Custom(field) => {
                if field.grid != *grid {
                    return Err(Error::invalid("custom initial field is on a different grid"));
                }
                Field::from_values(grid, field.values.clone())
            }
        }
    }
}

/// Fraction of the (wall-clipped) cell around `c` covered by `[lo, hi]`.
fn cell_fraction(c: f64, h: f64, wall_lo: f64, wall_hi: f64, lo: f64, hi: f64) -> f64 {
    let a = (c - 0.5 * h).max(wall_lo);
    let b = (c + 0.5 * h).min(wall_hi);
    let overlap = (b.min(hi) - a.max(lo)).max(0.0);
    overlap / (b - a)
}

/// Trait-window integral of one x-row, written into `out`.
///
/// The integrand is the piecewise-linear interpolant of the row, so nodes
/// inside the window enter with trapezoid weights and partial cells at the
/// window ends are integrated exactly.
fn competition_row(row: &[f64], grid: &Grid, config: &ModelConfig, cum: &mut [f64], out: &mut [f64]) {
    let n = row.len();
    let h = grid.dtheta;
    cum[0] = 0.0;
    for k in 1..n {
        cum[k] = cum[k - 1] + 0.5 * h * (row[k - 1] + row[k]);
    }
    match config.kind {
        ModelKind::NonLocalInfinite => out.iter_mut().for_each(|o| *o = cum[n - 1]),
        _ => {
            let antiderivative = |theta: f64| -> f64 {
                let pos = ((theta - grid.theta_min) / h).clamp(0.0, (n - 1) as f64);
                let k = (pos.floor() as usize).min(n - 2);
                let s = pos - k as f64;
                cum[k] + h * (s * row[k] + 0.5 * s * s * (row[k + 1] - row[k]))
            };
            let a = config.window;
            for (j, o) in out.iter_mut().enumerate() {
                let theta = grid.theta(j);
                let lo = (theta - a).max(grid.theta_min);
                let hi = (theta + a).min(grid.theta_max);
                *o = antiderivative(hi) - antiderivative(lo);
            }
        }
    }
}

fn competition_into(field: &Field, config: &ModelConfig, exec: Execution, out: &mut [f64]) {
    let grid = &field.grid;
    let nt = grid.ntheta;
    exec.for_each_row(out, nt, |i, dst| {
        let mut cum = vec![0.0; nt];
        competition_row(field.row(i), grid, config, &mut cum, dst);
    });
}

/// `⟨v⟩(x, θ) = ∫_{max(θ−A, θ_min)}^{min(θ+A, θ_max)} v(x, ω) dω` at every
/// node, or the full trait integral for `A = ∞`.
pub fn nonlocal_competition(field: &Field, config: &ModelConfig) -> Result<Field> {
    if config.kind == ModelKind::Local {
        return Err(Error::invalid("non-local competition requested for the local model"));
    }
    config.validate()?;
    let mut out = vec![0.0; field.grid.len()];
    competition_into(field, config, Execution::default(), &mut out);
    Ok(Field { grid: field.grid.clone(), values: out })
}

/// Evolving solution of one model.
#[derive(Clone, Debug)]
pub struct SolverState {
    pub t: f64,
    pub field: Field,
    pub config: ModelConfig,
    /// Step used by the most recent update.
    pub dt: f64,
    pub step_count: u64,
    pub safety: f64,
    /// Overrides the stability-derived step when set.
    pub forced_dt: Option<f64>,
    /// Accept a forced step above the stability limit (smooth-data order
    /// studies only).
    pub allow_unstable: bool,
    pub exec: Execution,
    mobility: Vec<f64>,
    competition: Vec<f64>,
    next: Vec<f64>,
    runaway_bound: f64,
}

impl SolverState {
    pub fn new(config: ModelConfig, field: Field, safety: f64) -> Result<Self> {
        config.validate()?;
        if !(safety > 0.0 && safety <= 1.0) {
            return Err(Error::invalid(format!("safety must lie in (0, 1], got {safety}")));
        }
        let field = Field::from_values(&field.grid, field.values)?;
        let grid = &field.grid;
        let mobility = (0..grid.ntheta).map(|j| 0.5 * grid.theta(j).abs().powf(config.alpha)).collect();
        let n = grid.len();
        let runaway_bound = 1e6 * field.sup_norm().max(1.0).max(config.plateau(grid));
        let dt = stable_dt(grid, &config, safety, 1.0 + field.sup_norm());
        Ok(SolverState {
            t: 0.0,
            field,
            config,
            dt,
            step_count: 0,
            safety,
            forced_dt: None,
            allow_unstable: false,
            exec: Execution::default(),
            mobility,
            competition: vec![0.0; n],
            next: vec![0.0; n],
            runaway_bound,
        })
    }

    pub fn with_forced_dt(mut self, dt: f64) -> Self {
        self.forced_dt = Some(dt);
        self
    }

    pub fn with_exec(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn grid(&self) -> &Grid {
        &self.field.grid
    }

    fn refresh_competition(&mut self) -> f64 {
        match self.config.kind {
            ModelKind::Local => self.field.sup_norm(),
            _ => {
                competition_into(&self.field, &self.config, self.exec, &mut self.competition);
                self.competition.iter().fold(0.0f64, |m, v| m.max(*v))
            }
        }
    }

    /// Advances by one step, never past `t + max_dt`. Returns the step used.
    pub fn advance(&mut self, max_dt: f64) -> Result<f64> {
        let max_c = self.refresh_competition();
        let stable = stable_dt(self.grid(), &self.config, self.safety, 1.0 + max_c);
        if let (Some(forced), false) = (self.forced_dt, self.allow_unstable) {
            // the clamp at zero can mask the blow-up, so refuse outright
            let limit = stable_dt(self.grid(), &self.config, 1.0, 1.0 + max_c);
            if forced > limit {
                return Err(Error::Unstable {
                    t: self.t,
                    step: self.step_count,
                    reason: format!("forced step {forced:.3e} exceeds the stability limit {limit:.3e}"),
                });
            }
        }
        let dt = self.forced_dt.unwrap_or(stable).min(max_dt);
        if !(dt > 0.0) {
            return Err(Error::invalid(format!("non-positive time step {dt}")));
        }

        let SolverState { field, config, competition, next, mobility, exec, .. } = self;
        let grid = &field.grid;
        let (nx, nt) = (grid.nx, grid.ntheta);
        let inv_dx2 = 1.0 / (grid.dx * grid.dx);
        let half_inv_dt2 = 0.5 / (grid.dtheta * grid.dtheta);
        let growth = config.growth_rate;
        let local = config.kind == ModelKind::Local;
        let dirichlet = config.theta_boundary == ThetaBoundary::Dirichlet;
        let old = &field.values;
        let comp: &[f64] = competition;
        let mob: &[f64] = mobility;

        exec.for_each_row(next, nt, |i, out| {
            let cur = &old[i * nt..(i + 1) * nt];
            let left = if i == 0 { &old[nt..2 * nt] } else { &old[(i - 1) * nt..i * nt] };
            let right = if i == nx - 1 { &old[(nx - 2) * nt..(nx - 1) * nt] } else { &old[(i + 1) * nt..(i + 2) * nt] };
            let crow = &comp[i * nt..(i + 1) * nt];
            for j in 0..nt {
                let v = cur[j];
                let below = if j == 0 { cur[1] } else { cur[j - 1] };
                let above = if j == nt - 1 { cur[nt - 2] } else { cur[j + 1] };
                let lap_x = (left[j] - 2.0 * v + right[j]) * inv_dx2;
                let lap_t = (below - 2.0 * v + above) * half_inv_dt2;
                let c = if local { v } else { crow[j] };
                let new = v + dt * (mob[j] * lap_x + lap_t + growth * v * (1.0 - c));
                out[j] = if new < 0.0 { 0.0 } else { new };
            }
            if dirichlet {
                out[0] = 0.0;
            }
        });

        std::mem::swap(&mut field.values, next);
        self.t += dt;
        self.dt = dt;
        self.step_count += 1;

        let sup = self.exec.max_indexed(nx, |i| {
            self.field.values[i * nt..(i + 1) * nt]
                .iter()
                .fold(0.0f64, |m, v| if v.is_nan() { f64::NAN } else { m.max(*v) })
        });
        if !sup.is_finite() {
            return Err(Error::Unstable { t: self.t, step: self.step_count, reason: "non-finite values".into() });
        }
        if sup > self.runaway_bound {
            return Err(Error::Unstable {
                t: self.t,
                step: self.step_count,
                reason: format!("sup-norm {sup:.3e} exceeds runaway bound {:.3e}", self.runaway_bound),
            });
        }
        Ok(dt)
    }

    pub fn step(&mut self) -> Result<f64> {
        self.advance(f64::INFINITY)
    }
}

/// One forward-Euler update of `state`.
pub fn step(mut state: SolverState) -> Result<SolverState> {
    state.step()?;
    Ok(state)
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub t_final: f64,
    pub snapshot_times: Vec<f64>,
    pub safety: f64,
    pub forced_dt: Option<f64>,
    /// Spacing of the sup-norm / dt / domain-escape monitor.
    pub monitor_interval: f64,
    pub exec: Execution,
}

impl RunOptions {
    pub fn new(t_final: f64) -> Self {
        RunOptions {
            t_final,
            snapshot_times: Vec::new(),
            safety: 0.5,
            forced_dt: None,
            monitor_interval: 1.0,
            exec: Execution::default(),
        }
    }

    pub fn with_snapshots(mut self, times: impl IntoIterator<Item = f64>) -> Self {
        self.snapshot_times = times.into_iter().collect();
        self
    }
}

#[derive(Clone, Debug)]
pub struct Snapshot {
    pub t: f64,
    pub field: Field,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonitorRecord {
    pub t: f64,
    pub sup_norm: f64,
    pub dt: f64,
    pub step: u64,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub config: ModelConfig,
    /// Initial field first, then the requested times in increasing order,
    /// always ending at `t_final`.
    pub snapshots: Vec<Snapshot>,
    pub monitor: Vec<MonitorRecord>,
    pub warnings: Vec<String>,
    pub steps: u64,
}

impl RunOutput {
    pub fn grid(&self) -> &Grid {
        &self.snapshots[0].field.grid
    }

    pub fn snapshot_at(&self, t: f64) -> Option<&Snapshot> {
        self.snapshots.iter().find(|s| (s.t - t).abs() <= 1e-9 * t.abs().max(1.0))
    }

    pub fn final_snapshot(&self) -> &Snapshot {
        self.snapshots.last().expect("run output always holds the initial field")
    }

    /// Largest sup-norm seen by the monitor.
    pub fn max_sup_norm(&self) -> f64 {
        self.monitor.iter().fold(0.0f64, |m, r| m.max(r.sup_norm))
    }
}

fn escape_warnings(field: &Field, plateau: f64, t: f64, flagged: &mut [bool; 2], warnings: &mut Vec<String>) {
    let g = &field.grid;
    let band = 5.min(g.nx).min(g.ntheta);
    let threshold = 1e-6 * plateau;
    if !flagged[0] {
        let m = (g.nx - band..g.nx).flat_map(|i| field.row(i).iter().copied()).fold(0.0f64, f64::max);
        if m > threshold {
            flagged[0] = true;
            warnings.push(format!("domain escape at x wall: max {m:.3e} within 5 cells of x_max at t = {t}"));
        }
    }
    if !flagged[1] {
        let m = (0..g.nx).flat_map(|i| field.row(i)[g.ntheta - band..].iter().copied()).fold(0.0f64, f64::max);
        if m > threshold {
            flagged[1] = true;
            warnings.push(format!("domain escape at theta wall: max {m:.3e} within 5 cells of theta_max at t = {t}"));
        }
    }
}

/// Integrates from `initial` to `t_final`, recording the requested
/// snapshots and a sup-norm monitor every `monitor_interval` time units.
pub fn run(config: &ModelConfig, grid: &Grid, initial: &InitialCondition, options: &RunOptions) -> Result<RunOutput> {
    if !(options.t_final >= 0.0 && options.t_final.is_finite()) {
        return Err(Error::invalid(format!("t_final must be finite and >= 0, got {}", options.t_final)));
    }
    let times = &options.snapshot_times;
    if times.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::invalid("snapshot times must be sorted"));
    }
    if times.iter().any(|&s| s < 0.0 || s > options.t_final) {
        return Err(Error::invalid("snapshot times must lie in [0, t_final]"));
    }
    if let Some(dt) = options.forced_dt {
        if !(dt > 0.0) {
            return Err(Error::invalid(format!("forced dt must be > 0, got {dt}")));
        }
    }
    if !(options.monitor_interval > 0.0) {
        return Err(Error::invalid("monitor interval must be > 0"));
    }

    let field = initial.sample(grid)?;
    let plateau = config.plateau(grid);
    let mut state = SolverState::new(config.clone(), field, options.safety)?.with_exec(options.exec);
    state.forced_dt = options.forced_dt;

    let mut snapshots = vec![Snapshot { t: 0.0, field: state.field.clone() }];
    let mut monitor = vec![MonitorRecord { t: 0.0, sup_norm: state.field.sup_norm(), dt: 0.0, step: 0 }];
    let mut warnings = Vec::new();
    let mut flagged = [false; 2];
    escape_warnings(&state.field, plateau, 0.0, &mut flagged, &mut warnings);

    let mut pending: Vec<f64> = times.iter().copied().filter(|&s| s > 0.0).collect();
    if options.t_final > 0.0 {
        pending.push(options.t_final);
    }
    pending.dedup();
    let mut snap_idx = 0;
    let mut next_monitor = options.monitor_interval;
    let tol = 1e-12 * options.t_final.max(1.0);

    while state.t < options.t_final - tol {
        let mut stop = options.t_final.min(next_monitor);
        if let Some(&s) = pending.get(snap_idx) {
            stop = stop.min(s);
        }
        let t_old = state.t;
        let dt = state.advance(stop - t_old)?;
        if dt == stop - t_old || (state.t - stop).abs() <= tol {
            state.t = stop;
        }
        if (state.t - next_monitor).abs() <= tol || (state.t - options.t_final).abs() <= tol {
            monitor.push(MonitorRecord { t: state.t, sup_norm: state.field.sup_norm(), dt, step: state.step_count });
            escape_warnings(&state.field, plateau, state.t, &mut flagged, &mut warnings);
            if (state.t - next_monitor).abs() <= tol {
                next_monitor += options.monitor_interval;
            }
        }
        while let Some(&s) = pending.get(snap_idx) {
            if (state.t - s).abs() <= tol {
                snapshots.push(Snapshot { t: s, field: state.field.clone() });
                snap_idx += 1;
            } else {
                break;
            }
        }
    }

    Ok(RunOutput { config: config.clone(), snapshots, monitor, warnings, steps: state.step_count })
}

/// Writes `x,theta,v` rows, row-major by x.
pub fn write_field_csv<W: Write>(field: &Field, mut w: W) -> std::io::Result<()> {
    writeln!(w, "x,theta,v")?;
    let g = &field.grid;
    for i in 0..g.nx {
        let x = g.x(i);
        for j in 0..g.ntheta {
            writeln!(w, "{},{},{}", x, g.theta(j), field.get(i, j))?;
        }
    }
    Ok(())
}
