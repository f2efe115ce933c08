//! Shared domain types: the (x, θ) tensor grid, density fields on it and the
//! model configuration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform tensor grid on `[x_min, x_max] × [theta_min, theta_max]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub x_min: f64,
    pub x_max: f64,
    pub theta_min: f64,
    pub theta_max: f64,
    pub nx: usize,
    pub ntheta: usize,
    pub dx: f64,
    pub dtheta: f64,
}

/// Grid for the physical models, with the trait axis starting at `θ = 1`.
pub fn build_grid(x_min: f64, x_max: f64, theta_max: f64, nx: usize, ntheta: usize) -> Result<Grid> {
    Grid::new(x_min, x_max, 1.0, theta_max, nx, ntheta)
}

impl Grid {
    /// General constructor; the shifted coordinates used by the particle
    /// representation put the trait wall at `theta_min = 0`.
    pub fn new(x_min: f64, x_max: f64, theta_min: f64, theta_max: f64, nx: usize, ntheta: usize) -> Result<Grid> {
        if ![x_min, x_max, theta_min, theta_max].iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("grid bounds must be finite"));
        }
        if x_min >= x_max {
            return Err(Error::invalid(format!("x_min ({x_min}) must be below x_max ({x_max})")));
        }
        if theta_min >= theta_max {
            return Err(Error::invalid(format!("theta_max ({theta_max}) must exceed theta_min ({theta_min})")));
        }
        if nx < 2 || ntheta < 2 {
            return Err(Error::invalid(format!("need nx, ntheta >= 2, got {nx}, {ntheta}")));
        }
        Ok(Grid {
            x_min,
            x_max,
            theta_min,
            theta_max,
            nx,
            ntheta,
            dx: (x_max - x_min) / (nx - 1) as f64,
            dtheta: (theta_max - theta_min) / (ntheta - 1) as f64,
        })
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx
    }

    #[inline]
    pub fn theta(&self, j: usize) -> f64 {
        self.theta_min + j as f64 * self.dtheta
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.nx).map(|i| self.x(i)).collect()
    }

    pub fn thetas(&self) -> Vec<f64> {
        (0..self.ntheta).map(|j| self.theta(j)).collect()
    }

    pub fn len(&self) -> usize {
        self.nx * self.ntheta
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.ntheta + j
    }
}

/// Non-negative density sampled on a [`Grid`], stored row-major by x
/// (`values[i * ntheta + j]` is the value at `(x_i, θ_j)`).
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: &Grid) -> Field {
        Field { grid: grid.clone(), values: vec![0.0; grid.len()] }
    }

    pub fn from_fn(grid: &Grid, mut f: impl FnMut(f64, f64) -> f64) -> Field {
        let mut values = Vec::with_capacity(grid.len());
        for i in 0..grid.nx {
            let x = grid.x(i);
            for j in 0..grid.ntheta {
                values.push(f(x, grid.theta(j)));
            }
        }
        Field { grid: grid.clone(), values }
    }

    /// Wraps raw values, checking shape, finiteness and sign.
    pub fn from_values(grid: &Grid, values: Vec<f64>) -> Result<Field> {
        if values.len() != grid.len() {
            return Err(Error::invalid(format!("field has {} values, grid needs {}", values.len(), grid.len())));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::invalid(format!("field values must be finite and >= 0, found {v}")));
        }
        Ok(Field { grid: grid.clone(), values })
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.grid.ntheta + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.grid.ntheta;
        &self.values[i * n..(i + 1) * n]
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Bilinear interpolation; `None` outside the grid rectangle.
    pub fn interpolate(&self, x: f64, theta: f64) -> Option<f64> {
        let g = &self.grid;
        let fx = (x - g.x_min) / g.dx;
        let ft = (theta - g.theta_min) / g.dtheta;
        let eps = 1e-9;
        if !(fx >= -eps && fx <= (g.nx - 1) as f64 + eps && ft >= -eps && ft <= (g.ntheta - 1) as f64 + eps) {
            return None;
        }
        let i = (fx.floor().max(0.0) as usize).min(g.nx - 2);
        let j = (ft.floor().max(0.0) as usize).min(g.ntheta - 2);
        let sx = (fx - i as f64).clamp(0.0, 1.0);
        let st = (ft - j as f64).clamp(0.0, 1.0);
        let v00 = self.get(i, j);
        let v01 = self.get(i, j + 1);
        let v10 = self.get(i + 1, j);
        let v11 = self.get(i + 1, j + 1);
        Some((1.0 - sx) * ((1.0 - st) * v00 + st * v01) + sx * ((1.0 - st) * v10 + st * v11))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    /// Logistic competition `u(1 − u)`.
    Local,
    /// Competition `∫_{max(θ−A, θ_min)}^{θ+A} v dω`.
    NonLocalWindow,
    /// Competition over the whole trait range (`A = ∞`).
    NonLocalInfinite,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThetaBoundary {
    Neumann,
    Dirichlet,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// Competition half-width `A`.
    pub window: f64,
    /// Spatial diffusion is `θ^alpha / 2`.
    pub alpha: f64,
    /// Condition at `theta_min`; `theta_max` and both x walls are always Neumann.
    pub theta_boundary: ThetaBoundary,
    pub growth_rate: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            kind: ModelKind::NonLocalWindow,
            window: 1.0,
            alpha: 1.0,
            theta_boundary: ThetaBoundary::Neumann,
            growth_rate: 1.0,
        }
    }
}

impl ModelConfig {
    pub fn local() -> Self {
        ModelConfig { kind: ModelKind::Local, ..Default::default() }
    }

    pub fn nonlocal(window: f64) -> Self {
        ModelConfig { kind: ModelKind::NonLocalWindow, window, ..Default::default() }
    }

    pub fn nonlocal_infinite() -> Self {
        ModelConfig { kind: ModelKind::NonLocalInfinite, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == ModelKind::NonLocalWindow && !(self.window > 0.0 && self.window.is_finite()) {
            return Err(Error::invalid(format!("window A must be > 0, got {}", self.window)));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if !self.growth_rate.is_finite() {
            return Err(Error::invalid("growth rate must be finite"));
        }
        Ok(())
    }

    /// Bulk density behind the front for a trait-homogeneous population:
    /// `1` for the local model, `1/(2A)` for an interior window, and
    /// `1/(θ_max − θ_min)` over a bounded trait range when `A = ∞`.
    pub fn plateau(&self, grid: &Grid) -> f64 {
        match self.kind {
            ModelKind::Local => 1.0,
            ModelKind::NonLocalWindow => 1.0 / (2.0 * self.window),
            ModelKind::NonLocalInfinite => 1.0 / (grid.theta_max - grid.theta_min),
        }
    }
}

/// Composite trapezoid rule on equally spaced samples.
pub fn trapezoid_integral(samples: &[f64], spacing: f64) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::invalid("trapezoid rule needs at least 2 samples"));
    }
    if !(spacing > 0.0) {
        return Err(Error::invalid(format!("spacing must be > 0, got {spacing}")));
    }
    let n = samples.len();
    let inner: f64 = samples[1..n - 1].iter().sum();
    Ok(spacing * (inner + 0.5 * (samples[0] + samples[n - 1])))
}
