//! Branching Brownian motion in the trait coordinate with the coupled
//! spatial coordinate `X = ∫ √θ dW` and the trait clock `J = ∫ θ ds`.
//!
//! Particles branch at `branch_rate` into two identical copies. The trait
//! is a standard Brownian motion; under [`BoundaryRule::Dirichlet0`] a
//! particle is killed when its trait reaches 0.

mod events;
mod verify;

pub use events::{
    count_good_particles, event_a_indicator, event_b_indicator, time_changed_path, EventParams, GoodCount,
};
pub use verify::{
    bridge_clock_probability, clock_band_exponent, clock_band_gaussian, count_clock_band, dubins_schwarz_check,
    integrated_bm_variance, many_to_one_check, many_to_two_check, population_martingale, reflection_density,
    reflection_histogram_check, ClockBandExponent, DubinsSchwarz, ManyToOne, ManyToTwo, ReflectionCheck,
};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryRule {
    /// Trait absorbed at 0 (particle removed).
    Dirichlet0,
    /// Trait free on ℝ, spatial noise `√|θ|`: the mirror image of a
    /// reflecting wall at 0.
    Neumann0,
    /// Trait reflected at 1 (the unshifted PDE coordinates).
    PhysicalNeumann1,
}

impl BoundaryRule {
    fn wall(self) -> f64 {
        match self {
            BoundaryRule::PhysicalNeumann1 => 1.0,
            _ => 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Particle {
    pub id: u64,
    pub x: f64,
    pub theta: f64,
    /// `∫ θ ds`, trapezoid rule on the step grid.
    pub clock: f64,
    pub alive: bool,
    pub parent_id: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BbmConfig {
    pub t: f64,
    pub dt: f64,
    pub branch_rate: f64,
    pub boundary: BoundaryRule,
    pub theta0: f64,
    pub x0: f64,
    pub particle_cap: usize,
    pub rng: RngSpec,
    /// Keep the genealogy of every particle (needed by the event checks).
    pub store_paths: bool,
    pub snapshot_times: Vec<f64>,
}

pub const MAX_DT: f64 = 0.05;
pub const DEFAULT_PARTICLE_CAP: usize = 2_000_000;

impl BbmConfig {
    pub fn new(t: f64, boundary: BoundaryRule, theta0: f64) -> Self {
        BbmConfig {
            t,
            dt: 1e-2,
            branch_rate: 1.0,
            boundary,
            theta0,
            x0: 0.0,
            particle_cap: DEFAULT_PARTICLE_CAP,
            rng: RngSpec::new(0, 0),
            store_paths: false,
            snapshot_times: Vec::new(),
        }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_rng(mut self, rng: RngSpec) -> Self {
        self.rng = rng;
        self
    }

    pub fn with_paths(mut self) -> Self {
        self.store_paths = true;
        self
    }

    pub fn single_path(mut self) -> Self {
        self.branch_rate = 0.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t >= 0.0 && self.t.is_finite()) {
            return Err(Error::invalid(format!("horizon must be finite and >= 0, got {}", self.t)));
        }
        if !(self.dt > 0.0) {
            return Err(Error::invalid(format!("dt must be > 0, got {}", self.dt)));
        }
        if self.dt >= MAX_DT {
            return Err(Error::invalid(format!("dt must be < {MAX_DT}, got {}", self.dt)));
        }
        if !(self.branch_rate >= 0.0 && self.branch_rate.is_finite()) {
            return Err(Error::invalid(format!("branch rate must be >= 0, got {}", self.branch_rate)));
        }
        if !self.x0.is_finite() || !self.theta0.is_finite() {
            return Err(Error::invalid("initial position must be finite"));
        }
        let ok = match self.boundary {
            BoundaryRule::Dirichlet0 => self.theta0 > 0.0,
            BoundaryRule::Neumann0 => true,
            BoundaryRule::PhysicalNeumann1 => self.theta0 >= 1.0,
        };
        if !ok {
            return Err(Error::invalid(format!(
                "theta0 = {} is outside the domain of {:?}",
                self.theta0, self.boundary
            )));
        }
        if self.particle_cap == 0 {
            return Err(Error::invalid("particle cap must be positive"));
        }
        if self.snapshot_times.iter().any(|&s| !(0.0..=self.t).contains(&s)) {
            return Err(Error::invalid("snapshot times must lie in [0, t]"));
        }
        Ok(())
    }

    /// Number of steps and the step actually used (`t / steps`).
    pub fn step_grid(&self) -> (usize, f64) {
        if self.t == 0.0 {
            return (0, self.dt);
        }
        let n = (self.t / self.dt - 1e-9).ceil().max(1.0) as usize;
        (n, self.t / n as f64)
    }
}

/// Alive particles at one time.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Population {
    pub t: f64,
    pub particles: Vec<Particle>,
    /// Particles removed by the Dirichlet rule so far.
    pub killed: u64,
}

impl Population {
    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn max_x(&self) -> Option<f64> {
        self.particles.iter().map(|p| p.x).reduce(f64::max)
    }

    pub fn max_theta(&self) -> Option<f64> {
        self.particles.iter().map(|p| p.theta).reduce(f64::max)
    }
}

#[derive(Clone, Debug)]
struct Segment {
    parent: Option<usize>,
    /// Step index of `theta[0]`.
    start: usize,
    theta: Vec<f64>,
    x: Vec<f64>,
}

/// Genealogy of a run: every final particle's full `(θ, X)` path.
#[derive(Clone, Debug)]
pub struct PathStore {
    pub dt: f64,
    segments: Vec<Segment>,
    leaves: Vec<usize>,
}

/// Sampled path of one particle on the step grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticlePath {
    pub dt: f64,
    pub theta: Vec<f64>,
    pub x: Vec<f64>,
}

impl PathStore {
    /// Path of the `k`-th particle of the final population.
    pub fn path(&self, k: usize) -> ParticlePath {
        let mut chain = Vec::new();
        let mut seg = Some(self.leaves[k]);
        while let Some(s) = seg {
            chain.push(s);
            seg = self.segments[s].parent;
        }
        let mut theta = Vec::new();
        let mut x = Vec::new();
        for (pos, &s) in chain.iter().enumerate().rev() {
            let segment = &self.segments[s];
            // each ancestor contributes its states up to the child's start
            let end = if pos == 0 { segment.theta.len() } else { self.segments[chain[pos - 1]].start - segment.start };
            theta.extend_from_slice(&segment.theta[..end]);
            x.extend_from_slice(&segment.x[..end]);
        }
        ParticlePath { dt: self.dt, theta, x }
    }

    pub fn len(&self) -> usize {
        self.leaves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.leaves.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct SimOutput {
    pub snapshots: Vec<Population>,
    pub population: Population,
    pub paths: Option<PathStore>,
    pub steps: usize,
    pub dt: f64,
}

/// Extra offspring during one step of a rate-`r` Yule process: geometric
/// with `P(k ≥ n) = qⁿ`, `q = 1 − e^{−r dt}`.
fn offspring(rng: &mut ChaCha8Rng, q: f64, ln_q: f64) -> usize {
    let u: f64 = 1.0 - rng.random::<f64>();
    if u > q {
        0
    } else {
        (u.ln() / ln_q).floor() as usize
    }
}

/// Runs one tree.
pub fn simulate(config: &BbmConfig) -> Result<SimOutput> {
    config.validate()?;
    let (n_steps, dt) = config.step_grid();
    let sqrt_dt = dt.sqrt();
    let q = -(-config.branch_rate * dt).exp_m1();
    let ln_q = q.ln();
    let wall = config.boundary.wall();
    let mut rng = config.rng.rng();

    let mut particles =
        vec![Particle { id: 0, x: config.x0, theta: config.theta0, clock: 0.0, alive: true, parent_id: None }];
    let mut next_id = 1u64;
    let mut killed = 0u64;
    let mut segments = Vec::new();
    let mut seg_of = Vec::new();
    if config.store_paths {
        segments.push(Segment { parent: None, start: 0, theta: vec![config.theta0], x: vec![config.x0] });
        seg_of.push(0usize);
    }

    let snap_steps: Vec<usize> =
        config.snapshot_times.iter().map(|&s| ((s / dt).round() as usize).min(n_steps)).collect();
    let mut snapshots = Vec::with_capacity(snap_steps.len());
    let take_snapshots = |step: usize, ps: &[Particle], killed: u64, out: &mut Vec<Population>| {
        for (&s, &time) in snap_steps.iter().zip(&config.snapshot_times) {
            if s == step {
                out.push(Population { t: time, particles: ps.to_vec(), killed });
            }
        }
    };
    take_snapshots(0, &particles, killed, &mut snapshots);

    for step in 1..=n_steps {
        let mut k = 0;
        while k < particles.len() {
            let p = &mut particles[k];
            let th0 = p.theta;
            let g1: f64 = rng.sample(StandardNormal);
            let g2: f64 = rng.sample(StandardNormal);
            let mut th1 = th0 + sqrt_dt * g1;
            let dead = match config.boundary {
                BoundaryRule::Dirichlet0 => {
                    p.x += th0.max(0.0).sqrt() * sqrt_dt * g2;
                    if th1 <= 0.0 {
                        true
                    } else {
                        // the bridge between the two samples may still touch 0
                        let e = 2.0 * th0 * th1 / dt;
                        e < 40.0 && rng.random::<f64>() < (-e).exp()
                    }
                }
                BoundaryRule::Neumann0 => {
                    p.x += th0.abs().sqrt() * sqrt_dt * g2;
                    false
                }
                BoundaryRule::PhysicalNeumann1 => {
                    p.x += th0.sqrt() * sqrt_dt * g2;
                    if th1 < wall {
                        th1 = 2.0 * wall - th1;
                    }
                    false
                }
            };
            if dead {
                particles.swap_remove(k);
                if config.store_paths {
                    seg_of.swap_remove(k);
                }
                killed += 1;
                continue;
            }
            p.clock += 0.5 * (th0 + th1) * dt;
            p.theta = th1;
            if config.store_paths {
                let seg = &mut segments[seg_of[k]];
                seg.theta.push(p.theta);
                seg.x.push(p.x);
            }
            k += 1;
        }

        if q > 0.0 {
            let current = particles.len();
            for k in 0..current {
                let extra = offspring(&mut rng, q, ln_q);
                for _ in 0..extra {
                    let mut child = particles[k];
                    child.parent_id = Some(child.id);
                    child.id = next_id;
                    next_id += 1;
                    particles.push(child);
                    if config.store_paths {
                        let parent = seg_of[k];
                        segments.push(Segment {
                            parent: Some(parent),
                            start: step + 1,
                            theta: Vec::new(),
                            x: Vec::new(),
                        });
                        seg_of.push(segments.len() - 1);
                    }
                }
            }
            if particles.len() > config.particle_cap {
                return Err(Error::Truncated {
                    population: particles.len(),
                    cap: config.particle_cap,
                    t: step as f64 * dt,
                });
            }
        }
        take_snapshots(step, &particles, killed, &mut snapshots);
    }

    let paths = config.store_paths.then_some(PathStore { dt, segments, leaves: seg_of });
    Ok(SimOutput { snapshots, population: Population { t: config.t, particles, killed }, paths, steps: n_steps, dt })
}
