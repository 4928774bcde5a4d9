//! Grids, field containers and the finite-difference / quadrature kernels
//! shared by every other module.
//!
//! All operators are second order: central differences in the interior,
//! one-sided three/four-point stencils at the two boundary nodes, and the
//! trapezoidal rule for every integral in space and time.

use num_complex::Complex64;

use crate::error::{Error, Result};

pub const MIN_GRID_POINTS: usize = 8;

/// Tolerance on the mass of a density passed to [`expectation`].
pub const NORMALIZATION_TOL: f64 = 1e-6;

/// Uniform spatial grid `x_i = x_min + i * dx`, `i = 0..n_points`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialGrid {
    x_min: f64,
    x_max: f64,
    n_points: usize,
}

impl SpatialGrid {
    pub fn new(x_min: f64, x_max: f64, n_points: usize) -> Result<Self> {
        if n_points < MIN_GRID_POINTS {
            return Err(Error::InvalidInput(format!(
                "spatial grid needs at least {MIN_GRID_POINTS} points, got {n_points}"
            )));
        }
        if !(x_min.is_finite() && x_max.is_finite()) || x_max <= x_min {
            return Err(Error::InvalidInput(format!(
                "spatial grid bounds must satisfy x_min < x_max, got [{x_min}, {x_max}]"
            )));
        }
        Ok(Self { x_min, x_max, n_points })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        self.n_points == 0
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n_points - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        if i + 1 == self.n_points {
            self.x_max
        } else {
            self.x_min + i as f64 * self.dx()
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.x(i)).collect()
    }

    /// Same interval with `2 (n - 1) + 1` points.
    pub fn refined(&self) -> Self {
        Self { n_points: 2 * (self.n_points - 1) + 1, ..*self }
    }

    /// Fractional index of `x`, clamped to the grid.
    pub fn locate(&self, x: f64) -> (usize, f64) {
        let s = ((x - self.x_min) / self.dx()).clamp(0.0, (self.n_points - 1) as f64);
        let i = (s.floor() as usize).min(self.n_points - 2);
        (i, s - i as f64)
    }
}

/// Uniform time grid `t_k = t_start + k * dt`, `k = 0..=n_steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t_start: f64,
    t_end: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_start: f64, t_end: f64, n_steps: usize) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::InvalidInput("time grid needs at least one step".into()));
        }
        if !(t_start.is_finite() && t_end.is_finite()) || t_end <= t_start {
            return Err(Error::InvalidInput(format!(
                "time grid must satisfy t_start < t_end, got [{t_start}, {t_end}]"
            )));
        }
        Ok(Self { t_start, t_end, n_steps })
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_nodes(&self) -> usize {
        self.n_steps + 1
    }

    pub fn dt(&self) -> f64 {
        (self.t_end - self.t_start) / self.n_steps as f64
    }

    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }

    pub fn t(&self, k: usize) -> f64 {
        if k == self.n_steps {
            self.t_end
        } else {
            self.t_start + k as f64 * self.dt()
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n_nodes()).map(|k| self.t(k)).collect()
    }

    pub fn refined(&self) -> Self {
        Self { n_steps: 2 * self.n_steps, ..*self }
    }

    /// Every `stride`-th node of this grid.
    pub fn strided(&self, stride: usize) -> Result<Self> {
        if stride == 0 || self.n_steps % stride != 0 {
            return Err(Error::InvalidInput(format!(
                "record stride {stride} does not divide n_steps = {}",
                self.n_steps
            )));
        }
        Ok(Self { n_steps: self.n_steps / stride, ..*self })
    }
}

/// External potential families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Potential {
    Free,
    /// `phi = m omega^2 x^2 / 2`.
    Harmonic { omega: f64 },
    /// Same potential as `Harmonic`; the initial state is displaced by `x0`.
    Coherent { omega: f64, x0: f64 },
    /// `phi = a (x^2 - b^2)^2`.
    DoubleWell { a: f64, b: f64 },
}

impl Potential {
    pub fn value(&self, x: f64, mass: f64) -> f64 {
        match *self {
            Potential::Free => 0.0,
            Potential::Harmonic { omega } | Potential::Coherent { omega, .. } => {
                0.5 * mass * omega * omega * x * x
            }
            Potential::DoubleWell { a, b } => {
                let s = x * x - b * b;
                a * s * s
            }
        }
    }

    pub fn id(&self) -> &'static str {
        match self {
            Potential::Free => "free",
            Potential::Harmonic { .. } => "harmonic",
            Potential::Coherent { .. } => "coherent",
            Potential::DoubleWell { .. } => "double_well",
        }
    }
}

/// Physical constants of a run. `nu = hbar / 2m`, `beta = hbar` and
/// `alpha = hbar / 2` are derived so they cannot drift apart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicsParams {
    mass: f64,
    hbar: f64,
    potential: Potential,
}

impl PhysicsParams {
    pub fn new(mass: f64, hbar: f64, potential: Potential) -> Result<Self> {
        if !(mass > 0.0 && mass.is_finite()) || !(hbar > 0.0 && hbar.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "mass and hbar must be positive and finite, got m = {mass}, hbar = {hbar}"
            )));
        }
        Ok(Self { mass, hbar, potential })
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn potential(&self) -> Potential {
        self.potential
    }

    /// Diffusion coefficient.
    pub fn nu(&self) -> f64 {
        self.hbar / (2.0 * self.mass)
    }

    /// Multiplier of the relative-entropy constraint.
    pub fn beta(&self) -> f64 {
        self.hbar
    }

    /// Multiplier of the Fisher-information production.
    pub fn alpha(&self) -> f64 {
        0.5 * self.hbar
    }
}

/// Unit tag carried by a [`ScalarField`]. Informational only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unit {
    Dimensionless,
    Density,
    Velocity,
    Acceleration,
    Energy,
    Other,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: SpatialGrid,
    values: Vec<f64>,
    unit: Unit,
}

impl ScalarField {
    pub fn new(grid: SpatialGrid, values: Vec<f64>, unit: Unit) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "field has {} values for a {}-point grid",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite field value at index {i}")));
        }
        Ok(Self { grid, values, unit })
    }

    pub fn from_fn(grid: SpatialGrid, unit: Unit, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, grid.points().into_iter().map(f).collect(), unit)
    }

    pub fn constant(grid: SpatialGrid, value: f64, unit: Unit) -> Result<Self> {
        Self::new(grid, vec![value; grid.len()], unit)
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn unit(&self) -> Unit {
        self.unit
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Linear interpolation, clamped to the end values outside the grid.
    pub fn interpolate(&self, x: f64) -> f64 {
        interpolate(&self.grid, &self.values, x)
    }

    pub fn zip_with(&self, other: &ScalarField, unit: Unit, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        same_grid(&self.grid, &other.grid)?;
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Self::new(self.grid, values, unit)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    grid: SpatialGrid,
    values: Vec<Complex64>,
}

impl ComplexField {
    pub fn new(grid: SpatialGrid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "field has {} values for a {}-point grid",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::InvalidInput(format!("non-finite wavefunction value at index {i}")));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: SpatialGrid, f: impl Fn(f64) -> Complex64) -> Result<Self> {
        Self::new(grid, grid.points().into_iter().map(f).collect())
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn norm_sqr(&self) -> ScalarField {
        ScalarField {
            grid: self.grid,
            values: self.values.iter().map(|z| z.norm_sqr()).collect(),
            unit: Unit::Density,
        }
    }
}

fn same_grid(a: &SpatialGrid, b: &SpatialGrid) -> Result<()> {
    if a != b {
        return Err(Error::InvalidInput("fields live on different grids".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FdKind {
    Gradient,
    Laplacian,
    /// Identical to `Gradient` in one dimension.
    Divergence,
}

pub fn fd_operator(kind: FdKind, f: &ScalarField) -> Result<ScalarField> {
    if f.grid.len() < MIN_GRID_POINTS {
        return Err(Error::InvalidInput(format!(
            "finite differences need at least {MIN_GRID_POINTS} points"
        )));
    }
    let dx = f.grid.dx();
    let values = match kind {
        FdKind::Gradient | FdKind::Divergence => gradient(&f.values, dx),
        FdKind::Laplacian => laplacian(&f.values, dx),
    };
    Ok(ScalarField { grid: f.grid, values, unit: Unit::Other })
}

/// Second-order first derivative of samples with spacing `h`.
pub fn gradient(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    assert!(n >= 3, "gradient needs at least three samples");
    let mut g = vec![0.0; n];
    let inv = 1.0 / (2.0 * h);
    for i in 1..n - 1 {
        g[i] = (f[i + 1] - f[i - 1]) * inv;
    }
    g[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) * inv;
    g[n - 1] = (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) * inv;
    g
}

/// Second-order second derivative of samples with spacing `h`.
pub fn laplacian(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    assert!(n >= 4, "laplacian needs at least four samples");
    let mut g = vec![0.0; n];
    let inv = 1.0 / (h * h);
    for i in 1..n - 1 {
        g[i] = (f[i + 1] - 2.0 * f[i] + f[i - 1]) * inv;
    }
    g[0] = (2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]) * inv;
    g[n - 1] = (2.0 * f[n - 1] - 5.0 * f[n - 2] + 4.0 * f[n - 3] - f[n - 4]) * inv;
    g
}

/// Trapezoidal rule for samples with spacing `h`.
pub fn trapezoid(f: &[f64], h: f64) -> f64 {
    match f.len() {
        0 | 1 => 0.0,
        n => {
            let inner: f64 = f[1..n - 1].iter().sum();
            h * (inner + 0.5 * (f[0] + f[n - 1]))
        }
    }
}

pub fn interpolate(grid: &SpatialGrid, values: &[f64], x: f64) -> f64 {
    let (i, w) = grid.locate(x);
    values[i] + w * (values[i + 1] - values[i])
}

/// Clears every flag within `width` points of an unset flag or of the grid edge.
pub fn erode(mask: &[bool], width: usize) -> Vec<bool> {
    let n = mask.len();
    let mut out = vec![false; n];
    // distance to the nearest false (or edge) from the left and right
    let mut run = 0usize;
    let mut left = vec![0usize; n];
    for i in 0..n {
        run = if mask[i] { run + 1 } else { 0 };
        left[i] = run;
    }
    run = 0;
    for i in (0..n).rev() {
        run = if mask[i] { run + 1 } else { 0 };
        out[i] = mask[i] && left[i] > width && run > width;
    }
    out
}

pub fn integrate(f: &ScalarField) -> f64 {
    trapezoid(&f.values, f.grid.dx())
}

/// `E[f] = \int rho f dx` for a normalized density on the same grid.
pub fn expectation(f: &ScalarField, rho: &ScalarField) -> Result<f64> {
    same_grid(&f.grid, &rho.grid)?;
    if let Some(i) = rho.values.iter().position(|&r| r < 0.0) {
        return Err(Error::InvalidInput(format!("negative density at index {i}")));
    }
    let defect = integrate(rho) - 1.0;
    if defect.abs() > NORMALIZATION_TOL {
        return Err(Error::NotNormalized { defect });
    }
    let prod: Vec<f64> = f.values.iter().zip(&rho.values).map(|(a, b)| a * b).collect();
    Ok(trapezoid(&prod, f.grid.dx()))
}

/// Trapezoidal rule in time over a series sampled on every node of `grid`.
pub fn time_integrate(series: &[f64], grid: &TimeGrid) -> Result<f64> {
    if series.len() != grid.n_nodes() {
        return Err(Error::InvalidInput(format!(
            "time series has {} entries, grid has {} nodes",
            series.len(),
            grid.n_nodes()
        )));
    }
    Ok(trapezoid(series, grid.dt()))
}
