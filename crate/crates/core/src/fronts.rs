//! Front extraction, power-law fits, theory quotients and the scaled
//! comparison between the local and non-local models.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::Field;
use crate::pde::Snapshot;
use crate::theory;

/// `S(x) = sup_θ v(x, θ)` per column and the trait where it is attained
/// (lowest index on ties).
pub fn sup_over_theta(field: &Field) -> (Vec<f64>, Vec<f64>) {
    let g = &field.grid;
    let mut s = Vec::with_capacity(g.nx);
    let mut arg = Vec::with_capacity(g.nx);
    for i in 0..g.nx {
        let row = field.row(i);
        let mut best = 0;
        for (j, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = j;
            }
        }
        s.push(row[best]);
        arg.push(g.theta(best));
    }
    (s, arg)
}

/// Median of `S` over the leftmost 10% of columns (at least one).
pub fn measure_plateau(s: &[f64]) -> f64 {
    if s.is_empty() {
        return f64::NAN;
    }
    let k = (s.len() / 10).max(1);
    let mut left = s[..k].to_vec();
    left.sort_by(f64::total_cmp);
    if k % 2 == 1 {
        left[k / 2]
    } else {
        0.5 * (left[k / 2 - 1] + left[k / 2])
    }
}

/// Largest `x` where `S` crosses `level_fraction · plateau`, linearly
/// interpolated between the bracketing nodes; `None` if `S` never reaches it.
pub fn front_position(xs: &[f64], s: &[f64], plateau: f64, level_fraction: f64) -> Option<f64> {
    let level = level_fraction * plateau;
    let i = s.iter().rposition(|&v| v >= level)?;
    if i + 1 == s.len() {
        return Some(xs[i]);
    }
    let (s0, s1) = (s[i], s[i + 1]);
    let w = if s0 > s1 { (s0 - level) / (s0 - s1) } else { 0.0 };
    Some(xs[i] + w * (xs[i + 1] - xs[i]))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct FrontSeries {
    pub times: Vec<f64>,
    pub x_front: Vec<f64>,
    /// `θ*` at the column nearest the front.
    pub theta_front: Vec<f64>,
    /// `S` at the column nearest the front.
    pub s_max: Vec<f64>,
    /// Plateau measured on the last snapshot.
    pub plateau: f64,
    pub level_fraction: f64,
    /// Snapshot times where `S` stayed below the level.
    pub undefined: Vec<f64>,
}

impl FrontSeries {
    pub fn from_snapshots(snapshots: &[Snapshot], level_fraction: f64) -> Result<FrontSeries> {
        if !(level_fraction > 0.0 && level_fraction < 1.0) {
            return Err(Error::invalid(format!("level fraction must lie in (0, 1), got {level_fraction}")));
        }
        let mut out = FrontSeries { level_fraction, ..FrontSeries::default() };
        for snap in snapshots {
            let g = &snap.field.grid;
            let xs = g.xs();
            let (s, arg) = sup_over_theta(&snap.field);
            let plateau = measure_plateau(&s);
            out.plateau = plateau;
            match front_position(&xs, &s, plateau, level_fraction) {
                Some(x) if plateau > 0.0 => {
                    let i = (((x - g.x_min) / g.dx).round() as usize).min(g.nx - 1);
                    out.times.push(snap.t);
                    out.x_front.push(x);
                    out.theta_front.push(arg[i]);
                    out.s_max.push(s[i]);
                }
                _ => out.undefined.push(snap.t),
            }
        }
        Ok(out)
    }

    pub fn points(&self) -> Vec<(f64, f64)> {
        self.times.iter().copied().zip(self.x_front.iter().copied()).collect()
    }

    pub fn at(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|&s| (s - t).abs() <= 1e-9 * t.abs().max(1.0))
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,x_front,theta_front,s_max")?;
        for k in 0..self.times.len() {
            writeln!(w, "{},{},{},{}", self.times[k], self.x_front[k], self.theta_front[k], self.s_max[k])?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PowerLawFit {
    pub c: f64,
    pub p: f64,
    /// Root-mean-square residual of `log x`.
    pub residual: f64,
    pub points: usize,
}

/// Least-squares fit of `log x = log c + p log t` over `t ∈ [lo, hi]`.
pub fn fit_power_law(points: &[(f64, f64)], window: (f64, f64)) -> Result<PowerLawFit> {
    let sel: Vec<(f64, f64)> = points.iter().copied().filter(|(t, _)| *t >= window.0 && *t <= window.1).collect();
    if sel.len() < 5 {
        return Err(Error::invalid(format!("power-law fit needs >= 5 points in the window, got {}", sel.len())));
    }
    if let Some((t, x)) = sel.iter().find(|(t, x)| !(*x > 0.0) || !(*t > 0.0)) {
        return Err(Error::invalid(format!("non-positive value ({t}, {x}) in the fit window")));
    }
    let n = sel.len() as f64;
    let lx: Vec<f64> = sel.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = sel.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx <= 0.0 {
        return Err(Error::invalid("fit window needs at least two distinct times"));
    }
    let p = sxy / sxx;
    let b = my - p * mx;
    let rss: f64 = lx.iter().zip(&ly).map(|(a, y)| (y - b - p * a).powi(2)).sum();
    Ok(PowerLawFit { c: b.exp(), p, residual: (rss / n).sqrt(), points: sel.len() })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct QuotientRow {
    pub t: f64,
    /// `γ₀ t^{3/2} / x_sim`
    pub x_ratio: f64,
    /// `(√2/2) t / θ_sim`
    pub theta_ratio: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct QuotientTable {
    pub rows: Vec<QuotientRow>,
    /// Times skipped because a simulated value was zero.
    pub skipped: Vec<f64>,
}

impl QuotientTable {
    pub fn at(&self, t: f64) -> Option<&QuotientRow> {
        self.rows.iter().find(|r| (r.t - t).abs() <= 1e-9 * t.abs().max(1.0))
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,x_ratio,theta_ratio")?;
        for r in &self.rows {
            writeln!(w, "{},{},{}", r.t, r.x_ratio, r.theta_ratio)?;
        }
        Ok(())
    }
}

/// Predicted over simulated front position and front trait.
pub fn theory_quotients(series: &FrontSeries) -> QuotientTable {
    let mut table = QuotientTable::default();
    for k in 0..series.times.len() {
        let (t, x, th) = (series.times[k], series.x_front[k], series.theta_front[k]);
        if t <= 0.0 || x == 0.0 || th == 0.0 {
            table.skipped.push(t);
            continue;
        }
        table.rows.push(QuotientRow {
            t,
            x_ratio: theory::predict_front(t) / x,
            theta_ratio: theory::predict_trait(t) / th,
        });
    }
    table
}

/// Linear-in-time interpolation between bilinear snapshot interpolants.
pub fn interpolate_space_time(snapshots: &[Snapshot], t: f64, x: f64, theta: f64) -> Option<f64> {
    let first = snapshots.first()?;
    let last = snapshots.last()?;
    let tol = 1e-9 * last.t.abs().max(1.0);
    if t < first.t - tol || t > last.t + tol {
        return None;
    }
    let k = snapshots.partition_point(|s| s.t <= t + tol);
    if k == 0 {
        return first.field.interpolate(x, theta);
    }
    let lo = &snapshots[k - 1];
    if (lo.t - t).abs() <= tol || k == snapshots.len() {
        return lo.field.interpolate(x, theta);
    }
    let hi = &snapshots[k];
    let w = (t - lo.t) / (hi.t - lo.t);
    Some((1.0 - w) * lo.field.interpolate(x, theta)? + w * hi.field.interpolate(x, theta)?)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Violation {
    /// Largest negative part.
    pub max: f64,
    /// Negative part integrated over the common region (`dx dθ` per node,
    /// summed over the compared times).
    pub l1: f64,
    pub points: usize,
}

impl Violation {
    fn add(&mut self, neg: f64, weight: f64) {
        self.points += 1;
        if neg > 0.0 {
            self.max = self.max.max(neg);
            self.l1 += neg * weight;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub eta: f64,
    pub epsilon: f64,
    /// `ε u((1−η)t, √(1−η)x, √(1−η)(θ−1)+1) ≤ v`
    pub lower: Violation,
    /// `v ≤ u((1+η)t, √(1+η)x, √(1+η)θ) / ε`
    pub upper: Violation,
}

/// Values of `v` and of the two rescaled `u` at every node of the non-local
/// snapshots taken at `times`.
#[derive(Clone, Debug)]
pub struct ComparisonSamples {
    pub eta: f64,
    v: Vec<f64>,
    u_lower: Vec<Option<f64>>,
    u_upper: Vec<Option<f64>>,
    weight: f64,
}

impl ComparisonSamples {
    pub fn new(run_loc: &[Snapshot], run_nloc: &[Snapshot], eta: f64, times: &[f64]) -> Result<Self> {
        if !(0.0..0.5).contains(&eta) {
            return Err(Error::invalid(format!("eta must lie in [0, 1/2), got {eta}")));
        }
        let (lo_s, hi_s) = ((1.0 - eta).sqrt(), (1.0 + eta).sqrt());
        let mut samples =
            ComparisonSamples { eta, v: Vec::new(), u_lower: Vec::new(), u_upper: Vec::new(), weight: 0.0 };
        for &t in times {
            let snap = run_nloc
                .iter()
                .find(|s| (s.t - t).abs() <= 1e-9 * t.abs().max(1.0))
                .ok_or_else(|| Error::invalid(format!("non-local run has no snapshot at t = {t}")))?;
            let g = &snap.field.grid;
            samples.weight = g.dx * g.dtheta;
            for i in 0..g.nx {
                let x = g.x(i);
                for j in 0..g.ntheta {
                    let th = g.theta(j);
                    samples.v.push(snap.field.get(i, j));
                    samples.u_lower.push(interpolate_space_time(
                        run_loc,
                        (1.0 - eta) * t,
                        lo_s * x,
                        lo_s * (th - 1.0) + 1.0,
                    ));
                    samples.u_upper.push(interpolate_space_time(run_loc, (1.0 + eta) * t, hi_s * x, hi_s * th));
                }
            }
        }
        let overlap_lo = samples.u_lower.iter().filter(|u| u.is_some()).count();
        let overlap_hi = samples.u_upper.iter().filter(|u| u.is_some()).count();
        if overlap_lo == 0 || overlap_hi == 0 {
            return Err(Error::invalid("insufficient overlap between the runs after scaling"));
        }
        Ok(samples)
    }

    pub fn evaluate(&self, epsilon: f64) -> ComparisonReport {
        let mut lower = Violation::default();
        let mut upper = Violation::default();
        for k in 0..self.v.len() {
            let v = self.v[k];
            if let Some(u) = self.u_lower[k] {
                lower.add(epsilon * u - v, self.weight);
            }
            if let Some(u) = self.u_upper[k] {
                upper.add(v - u / epsilon, self.weight);
            }
        }
        ComparisonReport { eta: self.eta, epsilon, lower, upper }
    }
}

/// Both scaled inequalities at a given `ε`.
pub fn compare_models(
    run_loc: &[Snapshot],
    run_nloc: &[Snapshot],
    eta: f64,
    epsilon: f64,
    times: &[f64],
) -> Result<ComparisonReport> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::invalid(format!("epsilon must lie in (0, 1], got {epsilon}")));
    }
    Ok(ComparisonSamples::new(run_loc, run_nloc, eta, times)?.evaluate(epsilon))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EpsilonSearch {
    /// Largest `ε` (on a log-scale bisection over `[1e-12, 1]`) with both
    /// maximal violations `≤ tolerance`.
    pub epsilon: f64,
    pub feasible: bool,
    pub tolerance: f64,
    pub report: ComparisonReport,
}

/// Both violations shrink as `ε` decreases, so the feasible set is an
/// interval `(0, ε*]`.
pub fn calibrate_epsilon(samples: &ComparisonSamples, tolerance: f64) -> EpsilonSearch {
    let ok = |e: f64| {
        let r = samples.evaluate(e);
        r.lower.max <= tolerance && r.upper.max <= tolerance
    };
    let (mut lo, mut hi) = (1e-12f64, 1.0f64);
    if ok(hi) {
        return EpsilonSearch { epsilon: 1.0, feasible: true, tolerance, report: samples.evaluate(1.0) };
    }
    if !ok(lo) {
        return EpsilonSearch { epsilon: lo, feasible: false, tolerance, report: samples.evaluate(lo) };
    }
    for _ in 0..80 {
        let mid = (lo * hi).sqrt();
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    EpsilonSearch { epsilon: lo, feasible: true, tolerance, report: samples.evaluate(lo) }
}

impl ComparisonReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "direction,eta,epsilon,max_violation,l1_violation,points")?;
        for (name, v) in [("lower", &self.lower), ("upper", &self.upper)] {
            writeln!(w, "{name},{},{},{},{},{}", self.eta, self.epsilon, v.max, v.l1, v.points)?;
        }
        Ok(())
    }
}
