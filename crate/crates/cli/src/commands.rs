//! Subcommand implementations. Each writes its artifacts into the run
//! directory and returns a JSON summary for the metadata sidecar.

use std::io::{self, Write};

use frontlab::bbm::{self, BbmConfig, BoundaryRule, EventParams};
use frontlab::fronts::{self, FrontSeries};
use frontlab::mckean::{self, DualityConfig};
use frontlab::pde::{self, InitialCondition, RunOptions};
use frontlab::stats::{z_score, Estimate};
use frontlab::theory::{self, TheoryConstants};
use frontlab::{build_grid, Error, ModelKind, MonteCarlo};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::Config;
use crate::output::OutputDir;

/// Why a command did not succeed.
#[derive(Clone, Debug, PartialEq)]
pub enum Failure {
    Config(String),
    Numerical(String),
    Verification(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 1,
            Failure::Numerical(_) => 2,
            Failure::Verification(_) => 3,
        }
    }

    pub fn status(&self) -> &'static str {
        match self {
            Failure::Config(_) => "config-error",
            Failure::Numerical(_) => "numerical-failure",
            Failure::Verification(_) => "verification-failure",
        }
    }

    pub fn reason(&self) -> &str {
        match self {
            Failure::Config(r) | Failure::Numerical(r) | Failure::Verification(r) => r,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Config(e.to_string())
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Config(format!("i/o error: {e}"))
    }
}

/// Summary plus an optional verification failure discovered after all
/// artifacts were written.
pub struct Report {
    pub summary: Value,
    pub failed: Option<String>,
}

impl Report {
    fn ok(summary: Value) -> Self {
        Report { summary, failed: None }
    }
}

fn write_rows<W: Write + ?Sized>(w: &mut W, header: &str, rows: impl IntoIterator<Item = String>) -> io::Result<()> {
    writeln!(w, "{header}")?;
    for r in rows {
        writeln!(w, "{r}")?;
    }
    Ok(())
}

fn pde_setup(cfg: &Config) -> Result<(frontlab::Grid, frontlab::ModelConfig), Failure> {
    let g = &cfg.grid;
    let grid = build_grid(g.x_min, g.x_max, g.theta_max, g.nx, g.ntheta)?;
    Ok((grid, cfg.model_config()))
}

fn run_options(cfg: &Config, snapshots: Vec<f64>) -> RunOptions {
    let mut opts = RunOptions::new(cfg.time.t_final).with_snapshots(snapshots);
    opts.safety = cfg.time.safety;
    opts.forced_dt = cfg.time.dt;
    opts
}

pub fn solve(cfg: &Config, out: &mut OutputDir) -> Result<Report, Failure> {
    let (grid, model) = pde_setup(cfg)?;
    let dumps = if cfg.time.snapshots.is_empty() { vec![cfg.time.t_final] } else { cfg.time.snapshots.clone() };
    let result = pde::run(&model, &grid, &InitialCondition::standard_block(), &run_options(cfg, dumps.clone()))?;
    let mut files = Vec::new();
    for &t in &dumps {
        let snap = result.snapshot_at(t).expect("requested snapshot recorded");
        let name = format!("field_t{t}.csv");
        out.write_with(&name, &["x", "theta", "v"], &format!("solution at t = {t}"), |w| {
            pde::write_field_csv(&snap.field, w)
        })?;
        files.push(name);
    }
    out.write_with("monitor.csv", &["t", "sup_norm", "dt", "step"], "sup-norm and time step per unit time", |w| {
        write_rows(
            w,
            "t,sup_norm,dt,step",
            result.monitor.iter().map(|m| format!("{},{},{},{}", m.t, m.sup_norm, m.dt, m.step)),
        )
    })?;
    Ok(Report::ok(json!({
        "grid": grid,
        "model": model,
        "steps": result.steps,
        "max_sup_norm": result.max_sup_norm(),
        "plateau": model.plateau(&grid),
        "warnings": result.warnings,
        "fields": files,
    })))
}

pub fn front(cfg: &Config, out: &mut OutputDir) -> Result<Report, Failure> {
    let (grid, model) = pde_setup(cfg)?;
    let t_final = cfg.time.t_final;
    let every = cfg.time.front_every;
    let mut times: Vec<f64> = (1..).map(|k| k as f64 * every).take_while(|&t| t < t_final - 1e-9).collect();
    times.push(t_final);
    let result = pde::run(&model, &grid, &InitialCondition::standard_block(), &run_options(cfg, times))?;
    let series = FrontSeries::from_snapshots(&result.snapshots, cfg.verify.level_fraction)?;
    let quotients = fronts::theory_quotients(&series);
    out.write_with("front.csv", &["t", "x_front", "theta_front", "s_max"], "front series", |w| series.write_csv(w))?;
    out.write_with("quotients.csv", &["t", "x_ratio", "theta_ratio"], "theory over simulation", |w| {
        quotients.write_csv(w)
    })?;
    let window = (cfg.verify.fit_window[0], cfg.verify.fit_window[1]);
    let fit = match fronts::fit_power_law(&series.points(), window) {
        Ok(f) => json!(f),
        Err(e) => json!({ "error": e.to_string() }),
    };
    let saturation = series.x_front.last().and_then(|&xf| {
        let (s, _) = fronts::sup_over_theta(&result.final_snapshot().field);
        let xs = grid.xs();
        let i = xs.iter().position(|&x| x >= xf / 4.0)?;
        Some(s[i])
    });
    out.write_json(
        "fit.json",
        "power-law fit of the front over the fit window",
        &json!({ "window": window, "fit": fit }),
    )?;
    Ok(Report::ok(json!({
        "model": model,
        "plateau": series.plateau,
        "level_fraction": series.level_fraction,
        "front_convention": "largest x where sup_theta v crosses level_fraction x plateau (median of leftmost 10% of columns)",
        "undefined_times": series.undefined,
        "skipped_quotients": quotients.skipped,
        "saturation_at_quarter_front": saturation,
        "exploratory": model.kind == ModelKind::NonLocalInfinite,
        "warnings": result.warnings,
        "fit": fit,
    })))
}

#[derive(Serialize)]
struct BbmRow {
    n: usize,
    max_x: Option<f64>,
    max_theta: Option<f64>,
    z: Option<usize>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn bbm(cfg: &Config, seed: u64, out: &mut OutputDir) -> Result<Report, Failure> {
    let b = &cfg.bbm;
    let gamma = b.gamma.unwrap_or_else(theory::critical_gamma);
    let events = match b.event_a {
        Some(a) => Some(EventParams::new(a, gamma, b.t)?),
        None => None,
    };
    let mut base = BbmConfig::new(b.t, b.boundary, b.theta0).with_dt(b.dt);
    base.x0 = b.x0;
    base.particle_cap = b.particle_cap;
    base.store_paths = events.is_some();
    base.validate()?;
    let mc = MonteCarlo::new(b.replicates, seed);
    let rows = mc.run(|_, spec| -> Result<BbmRow, Error> {
        let sim = bbm::simulate(&base.clone().with_rng(spec))?;
        let z = match &events {
            Some(p) => Some(bbm::count_good_particles(&sim, p)?.count),
            None => None,
        };
        Ok(BbmRow { n: sim.population.len(), max_x: sim.population.max_x(), max_theta: sim.population.max_theta(), z })
    });
    let rows: Vec<BbmRow> = rows.into_iter().collect::<Result<_, _>>()?;
    out.write_with("replicates.csv", &["replicate", "N_t", "max_x", "max_theta", "Z"], "one line per tree", |w| {
        write_rows(
            w,
            "replicate,N_t,max_x,max_theta,Z",
            rows.iter().enumerate().map(|(k, r)| {
                format!(
                    "{k},{},{},{},{}",
                    r.n,
                    opt(r.max_x),
                    opt(r.max_theta),
                    r.z.map(|z| z.to_string()).unwrap_or_default()
                )
            }),
        )
    })?;
    let n: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let n_est = Estimate::from_samples(&n);
    let expected = (b.t).exp();
    // without killing the mean population is e^t
    let n_z = (b.boundary != BoundaryRule::Dirichlet0).then(|| n_est.z_against(&Estimate::exact(expected)));
    let z_summary = events.map(|p| {
        let zs: Vec<f64> = rows.iter().map(|r| r.z.unwrap_or(0) as f64).collect();
        let positive = zs.iter().filter(|&&z| z > 0.0).count() as f64 / zs.len() as f64;
        json!({ "params": p, "mean_Z": Estimate::from_samples(&zs), "fraction_positive": positive })
    });
    let summary = json!({
        "config": base,
        "mean_N": n_est,
        "expected_N_without_killing": expected,
        "z_N": n_z,
        "good_events": z_summary,
    });
    out.write_json("summary.json", "means, standard errors and z-scores", &summary)?;
    Ok(Report::ok(summary))
}

pub fn theory_cmd(cfg: &Config, out: &mut OutputDir) -> Result<Report, Failure> {
    let gamma = cfg.bbm.gamma.unwrap_or_else(theory::critical_gamma);
    let t = if cfg.time.t_final > 0.0 { cfg.time.t_final } else { 1.0 };
    let constants = TheoryConstants::new(gamma, t)?;
    let value = json!({
        "gamma0": theory::critical_gamma(),
        "a0": theory::critical_a(),
        "apriori_a": theory::apriori_a(),
        "mobility_exponent": theory::alpha_exponent(cfg.model.alpha),
        "constants": constants,
    });
    out.write_json("constants.json", "closed-form constants", &value)?;
    let curve_x = theory::curve(t, 101, theory::predict_front);
    let curve_t = theory::curve(t, 101, theory::predict_trait);
    out.write_with("curves.csv", &["t", "x_theory", "theta_theory"], "predicted front position and trait", |w| {
        write_rows(
            w,
            "t,x_theory,theta_theory",
            curve_x.iter().zip(&curve_t).map(|(a, b)| format!("{},{},{}", a.0, a.1, b.1)),
        )
    })?;
    Ok(Report::ok(value))
}

fn duality_config(cfg: &Config) -> DualityConfig {
    DualityConfig { mc_dt: cfg.verify.mc_dt, z_threshold: cfg.verify.z_threshold, ..DualityConfig::default() }
}

pub const KPP_PROBES: [f64; 6] = [-1.0, -0.5, 0.0, 0.5, 1.0, 2.0];
pub const TOADS_PROBES: [(f64, f64); 5] = [(0.0, 0.5), (-0.5, 0.5), (0.5, 0.5), (0.0, 0.25), (0.0, 0.75)];

pub fn verify_mckean(cfg: &Config, seed: u64, out: &mut OutputDir) -> Result<Report, Failure> {
    let v = &cfg.verify;
    let dc = duality_config(cfg);
    let mc = MonteCarlo::new(v.replicates, seed);
    let kpp = mckean::duality_check_kpp(v.t, &KPP_PROBES, &mc.relabel(1), &dc)?;
    let toads = mckean::duality_check_toads(v.t, &TOADS_PROBES, &mc.relabel(2), &dc)?;
    let cols = ["probe", "t", "x", "theta", "u_pde", "u_mc", "se", "z", "pass"];
    out.write_with("mckean_kpp.csv", &cols, "1D Fisher-KPP duality probes", |w| kpp.write_csv(w))?;
    out.write_with(
        "mckean_toads.csv",
        &cols,
        "trait-structured duality probes (shifted traits, Dirichlet at 0)",
        |w| toads.write_csv(w),
    )?;
    let pass = kpp.all_pass() && toads.all_pass();
    let summary = json!({
        "t": v.t,
        "replicates": v.replicates,
        "z_threshold": v.z_threshold,
        "max_abs_z_kpp": kpp.max_abs_z(),
        "max_abs_z_toads": toads.max_abs_z(),
        "pass": pass,
    });
    let failed = (!pass).then(|| format!("duality probe beyond |z| = {}", v.z_threshold));
    Ok(Report { summary, failed })
}

#[derive(Clone, Debug, Serialize)]
struct CheckRow {
    check: String,
    estimate: f64,
    se: f64,
    reference: f64,
    reference_se: f64,
    statistic: f64,
    pass: bool,
}

impl CheckRow {
    fn z(check: &str, est: Estimate, reference: Estimate, threshold: f64) -> CheckRow {
        let z = est.z_against(&reference);
        CheckRow {
            check: check.into(),
            estimate: est.mean,
            se: est.se,
            reference: reference.mean,
            reference_se: reference.se,
            statistic: z,
            pass: z.abs() < threshold,
        }
    }

    fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.check, self.estimate, self.se, self.reference, self.reference_se, self.statistic, self.pass
        )
    }
}

const CHECK_COLUMNS: [&str; 7] = ["check", "estimate", "se", "reference", "reference_se", "statistic", "pass"];

fn write_checks(out: &mut OutputDir, name: &str, description: &str, rows: &[CheckRow]) -> io::Result<()> {
    out.write_with(name, &CHECK_COLUMNS, description, |w| {
        write_rows(w, &CHECK_COLUMNS.join(","), rows.iter().map(CheckRow::csv))
    })
}

fn finish_checks(rows: Vec<CheckRow>) -> Report {
    let failed: Vec<&str> = rows.iter().filter(|r| !r.pass).map(|r| r.check.as_str()).collect();
    let failed = (!failed.is_empty()).then(|| format!("failed checks: {}", failed.join(", ")));
    Report { summary: json!({ "checks": rows }), failed }
}

pub fn verify_moments(cfg: &Config, seed: u64, out: &mut OutputDir) -> Result<Report, Failure> {
    let v = &cfg.verify;
    let zt = v.z_threshold;
    let mut rows = Vec::new();

    let var = bbm::integrated_bm_variance(2.0, 1e-3, &MonteCarlo::new(v.paths, seed).relabel(1))?;
    rows.push(CheckRow::z("integrated_variance_t2", var, Estimate::exact(8.0 / 3.0), zt));

    let trees = MonteCarlo::new(v.trees, seed).relabel(2);
    let base = BbmConfig::new(3.0, BoundaryRule::Neumann0, 0.0);
    let ones = bbm::many_to_one_check(&base, |_| 1.0, &trees, 10 * v.trees)?;
    rows.push(CheckRow::z("many_to_one_g1", ones.lhs, ones.rhs, zt));
    let up = bbm::many_to_one_check(&base, |p| if p.theta > 0.0 { 1.0 } else { 0.0 }, &trees.relabel(3), 10 * v.trees)?;
    rows.push(CheckRow::z("many_to_one_theta_up", up.lhs, up.rhs, zt));

    let m2 = bbm::many_to_two_check(2.0, 1e-2, &trees.relabel(4), 50 * v.trees)?;
    rows.push(CheckRow::z("many_to_two_t2", m2.direct, m2.decomposition, zt));

    let mart = bbm::population_martingale(&[1.0, 2.0, 3.0], 1e-2, &trees.relabel(5))?;
    for (t, e) in mart {
        rows.push(CheckRow::z(&format!("martingale_t{t}"), e, Estimate::exact(1.0), zt));
    }
    write_checks(out, "moments.csv", "moment identities", &rows)?;
    Ok(finish_checks(rows))
}

pub fn verify_lemmas(cfg: &Config, seed: u64, out: &mut OutputDir) -> Result<Report, Failure> {
    let v = &cfg.verify;
    let mc = MonteCarlo::new(v.paths, seed);
    let mut rows = Vec::new();

    let refl = bbm::reflection_histogram_check(1.0, 100, 0.25, 2.5, &mc.relabel(1).with_replicates(50_000))?;
    rows.push(CheckRow {
        check: "reflection_chi2".into(),
        estimate: refl.chi2,
        se: 0.0,
        reference: refl.dof as f64,
        reference_se: 0.0,
        statistic: refl.p_value,
        pass: refl.p_value > 0.01 && (refl.normalization - 1.0).abs() < 1e-4,
    });

    let ds = bbm::dubins_schwarz_check(2.0, 3.0, 1e-3, 0.5, &mc.relabel(2).with_replicates(400))?;
    rows.push(CheckRow {
        check: "dubins_schwarz_ks".into(),
        estimate: ds.ks,
        se: 0.0,
        reference: 0.0,
        reference_se: 0.0,
        statistic: ds.p_value,
        pass: ds.p_value > 0.01,
    });

    let bridge = mc.relabel(3).with_replicates(200_000);
    let mut scaled = Vec::new();
    for t in [4.0, 8.0, 16.0] {
        let e = bbm::bridge_clock_probability(0.0, 0.0, 4.0, t, &bridge)?;
        scaled.push(e.scale((t + 1.0) * (t + 1.0)));
    }
    let growth = z_score(scaled[2].mean - scaled[0].mean, (scaled[2].se.powi(2) + scaled[0].se.powi(2)).sqrt());
    rows.push(CheckRow {
        check: "bridge_scaling_t16_vs_t4".into(),
        estimate: scaled[2].mean,
        se: scaled[2].se,
        reference: scaled[0].mean,
        reference_se: scaled[0].se,
        statistic: growth,
        pass: growth < v.z_threshold,
    });

    let (t, a, h) = (8.0, 0.3, 0.1);
    let band_base = BbmConfig::new(t, BoundaryRule::Dirichlet0, 1.5 * a * t);
    let band = bbm::clock_band_exponent(&band_base, a, h, &MonteCarlo::new(v.clock_band_trees, seed).relabel(4))?;
    rows.push(CheckRow {
        check: "clock_band_exponent".into(),
        estimate: band.exponent,
        se: band.mean_count.se / (band.mean_count.mean * t),
        reference: band.target,
        reference_se: 0.0,
        statistic: band.exponent - band.target,
        pass: (band.exponent - band.target).abs() <= 0.25,
    });

    let p = EventParams::new(theory::critical_a(), theory::critical_gamma(), 10.0)?;
    let good_base = BbmConfig::new(10.0, BoundaryRule::Dirichlet0, p.theta_start()).with_paths();
    let good = MonteCarlo::new(200, seed).relabel(5).run(|_, spec| -> Result<usize, Error> {
        Ok(bbm::count_good_particles(&bbm::simulate(&good_base.clone().with_rng(spec))?, &p)?.count)
    });
    let good: Vec<usize> = good.into_iter().collect::<Result<_, _>>()?;
    let frac = good.iter().filter(|&&z| z > 0).count() as f64 / good.len() as f64;
    rows.push(CheckRow {
        check: "good_particles_exist".into(),
        estimate: frac,
        se: 0.0,
        reference: 0.0,
        reference_se: 0.0,
        statistic: frac,
        pass: frac > 0.0,
    });

    write_checks(out, "lemmas.csv", "path lemmas and tail estimates", &rows)?;
    Ok(finish_checks(rows))
}
