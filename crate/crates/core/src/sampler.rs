//! Euler–Maruyama sampling of the forward and backward diffusions, plus the
//! estimators that read conditional and absolute expectations off an ensemble.
//!
//! Every path owns a ChaCha8 stream selected by `(seed, direction, path index)`
//! and consumes it in step order, so an ensemble is a pure function of its
//! inputs no matter how the paths are scheduled across threads.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::{interpolate, trapezoid, PhysicsParams, ScalarField, SpatialGrid, TimeGrid};
use crate::schrodinger::DriftHistory;

pub const MIN_PATHS: usize = 100;
/// Fraction of escaped paths above which sampling fails.
pub const MAX_ESCAPE_FRACTION: f64 = 0.01;
pub const CONDITIONAL_BINS: usize = 64;
/// Paths needed before conditional derivatives are estimated at all.
pub const MIN_CONDITIONAL_PATHS: usize = 10_000;
/// Bins with fewer paths are flagged as low statistics.
pub const MIN_BIN_OCCUPANCY: usize = 30;
/// Probability mass covered by the conditional-estimate bins.
pub const BIN_MASS: f64 = 0.999;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepRule {
    EulerMaruyama,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interpolation {
    LinearInX,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplerConfig {
    pub n_paths: usize,
    pub seed: u64,
    pub step_rule: StepRule,
    pub interpolation: Interpolation,
    /// Keep every `record_stride`-th time node; `None` picks `n_steps / 10`
    /// when that divides evenly and 1 otherwise.
    pub record_stride: Option<usize>,
}

impl SamplerConfig {
    pub fn new(n_paths: usize, seed: u64) -> Result<Self> {
        let cfg = Self {
            n_paths,
            seed,
            step_rule: StepRule::EulerMaruyama,
            interpolation: Interpolation::LinearInX,
            record_stride: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_record_stride(mut self, stride: usize) -> Self {
        self.record_stride = Some(stride);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_paths < MIN_PATHS {
            return Err(Error::InvalidInput(format!("n_paths must be at least {MIN_PATHS}, got {}", self.n_paths)));
        }
        if self.record_stride == Some(0) {
            return Err(Error::InvalidInput("record stride must be positive".into()));
        }
        Ok(())
    }

    pub fn stride_for(&self, n_steps: usize) -> usize {
        match self.record_stride {
            Some(s) => s,
            None if n_steps % 10 == 0 => n_steps / 10,
            None => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn id(&self) -> &'static str {
        match self {
            Direction::Forward => "forward",
            Direction::Backward => "backward",
        }
    }

    fn tag(&self) -> u8 {
        match self {
            Direction::Forward => 1,
            Direction::Backward => 2,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

/// The random stream of one path.
pub fn path_rng(seed: u64, direction: Direction, path: usize) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8] = direction.tag();
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(path as u64);
    rng
}

/// Sampled paths, stored in forward time order on the recorded nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    grid: SpatialGrid,
    tgrid: TimeGrid,
    stride: usize,
    direction: Direction,
    config: SamplerConfig,
    n_nodes: usize,
    positions: Vec<f64>,
    escaped: Vec<bool>,
}

impl PathEnsemble {
    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    /// Grid of the recorded nodes.
    pub fn tgrid(&self) -> &TimeGrid {
        &self.tgrid
    }

    pub fn record_stride(&self) -> usize {
        self.stride
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.config
    }

    pub fn n_paths(&self) -> usize {
        self.escaped.len()
    }

    pub fn n_escaped(&self) -> usize {
        self.escaped.iter().filter(|&&e| e).count()
    }

    pub fn escaped(&self) -> &[bool] {
        &self.escaped
    }

    /// Row-major `(path, recorded node)` positions.
    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn path(&self, p: usize) -> &[f64] {
        &self.positions[p * self.n_nodes..(p + 1) * self.n_nodes]
    }

    /// Indices of the paths that stayed inside the domain.
    pub fn retained(&self) -> impl Iterator<Item = usize> + '_ {
        self.escaped.iter().enumerate().filter(|(_, &e)| !e).map(|(p, _)| p)
    }

    /// Positions of the retained paths at recorded node `j`.
    pub fn marginal(&self, j: usize) -> Vec<f64> {
        self.retained().map(|p| self.positions[p * self.n_nodes + j]).collect()
    }

    /// Copy with every position shifted by `z[j]` (a deterministic perturbation).
    pub fn perturbed(&self, z: &[f64]) -> Result<Self> {
        if z.len() != self.n_nodes {
            return Err(Error::InvalidInput("perturbation does not match the recorded nodes".into()));
        }
        let mut out = self.clone();
        for (i, x) in out.positions.iter_mut().enumerate() {
            *x += z[i % self.n_nodes];
        }
        Ok(out)
    }
}

/// Starting law of a sampler run.
#[derive(Debug, Clone)]
pub enum InitialLaw<'a> {
    Density(&'a ScalarField),
    Point(f64),
}

/// Inverse-CDF sampling from a grid density whose CDF is the running
/// trapezoid, linear between grid points.
#[derive(Debug, Clone)]
pub struct GridCdf {
    grid: SpatialGrid,
    cdf: Vec<f64>,
}

impl GridCdf {
    pub fn new(grid: &SpatialGrid, rho: &[f64]) -> Result<Self> {
        if rho.len() != grid.len() {
            return Err(Error::InvalidInput("density length does not match the grid".into()));
        }
        if rho.iter().any(|r| !(*r >= 0.0) || !r.is_finite()) {
            return Err(Error::InvalidInput("density must be finite and non-negative".into()));
        }
        let h = grid.dx();
        let mut cdf = Vec::with_capacity(rho.len());
        let mut acc = 0.0;
        cdf.push(0.0);
        for w in rho.windows(2) {
            acc += 0.5 * h * (w[0] + w[1]);
            cdf.push(acc);
        }
        if !(acc > 0.0) {
            return Err(Error::InvalidInput("density has zero mass".into()));
        }
        cdf.iter_mut().for_each(|c| *c /= acc);
        Ok(Self { grid: *grid, cdf })
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.grid.x_min() {
            0.0
        } else if x >= self.grid.x_max() {
            1.0
        } else {
            interpolate(&self.grid, &self.cdf, x)
        }
    }

    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let i = self.cdf.partition_point(|&c| c <= u).clamp(1, self.cdf.len() - 1) - 1;
        let (c0, c1) = (self.cdf[i], self.cdf[i + 1]);
        let w = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.0 };
        self.grid.x(i) + w.clamp(0.0, 1.0) * self.grid.dx()
    }
}

/// Kolmogorov–Smirnov distance between samples and a grid density.
pub fn ks_distance(samples: &[f64], grid: &SpatialGrid, rho: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::LowStatistics("no samples for the KS distance".into()));
    }
    let cdf = GridCdf::new(grid, rho)?;
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    Ok(xs.iter().enumerate().fold(0.0_f64, |d, (i, &x)| {
        let f = cdf.cdf(x);
        d.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs())
    }))
}

/// Forward diffusion `dx = b+ dt + sqrt(2 nu) dW` from `rho0`.
pub fn sample_forward(
    drifts: &DriftHistory,
    rho0: &ScalarField,
    params: &PhysicsParams,
    cfg: &SamplerConfig,
) -> Result<PathEnsemble> {
    sample(Direction::Forward, drifts, &InitialLaw::Density(rho0), params.nu(), cfg)
}

/// Backward diffusion integrated in reverse time from `rho_t` at the final node.
pub fn sample_backward(
    drifts: &DriftHistory,
    rho_t: &ScalarField,
    params: &PhysicsParams,
    cfg: &SamplerConfig,
) -> Result<PathEnsemble> {
    sample(Direction::Backward, drifts, &InitialLaw::Density(rho_t), params.nu(), cfg)
}

/// Core sampler. Forward: `x_{k+1} = x_k + b+(x_k, t_k) dt + sqrt(2 nu dt) g`;
/// backward: `x_{k-1} = x_k - b-(x_k, t_k) dt + sqrt(2 nu dt) g`.
pub fn sample(
    direction: Direction,
    drifts: &DriftHistory,
    initial: &InitialLaw<'_>,
    nu: f64,
    cfg: &SamplerConfig,
) -> Result<PathEnsemble> {
    cfg.validate()?;
    if !(nu > 0.0) {
        return Err(Error::InvalidInput(format!("diffusivity must be positive, got {nu}")));
    }
    let grid = *drifts.grid();
    let full = *drifts.tgrid();
    let stride = cfg.stride_for(full.n_steps());
    let tgrid = full.strided(stride)?;
    let n_nodes = tgrid.n_nodes();
    let cdf = match initial {
        InitialLaw::Density(rho) => {
            if rho.grid() != &grid {
                return Err(Error::InvalidInput("initial density is not on the drift grid".into()));
            }
            Some(GridCdf::new(&grid, rho.values())?)
        }
        InitialLaw::Point(x) => {
            if !(grid.x_min()..=grid.x_max()).contains(x) {
                return Err(Error::InvalidInput(format!("starting point {x} lies outside the domain")));
            }
            None
        }
    };
    let start = |rng: &mut ChaCha8Rng| match (&cdf, initial) {
        (Some(c), _) => c.quantile(rng.random::<f64>()),
        (None, InitialLaw::Point(x)) => *x,
        _ => unreachable!(),
    };
    let n_steps = full.n_steps();
    let dt = full.dt();
    let kick = (2.0 * nu * dt).sqrt();
    let (lo, hi) = (grid.x_min(), grid.x_max());
    let drift = match direction {
        Direction::Forward => drifts.b_plus(),
        Direction::Backward => drifts.b_minus(),
    };

    let rows: Vec<(Vec<f64>, bool)> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = path_rng(cfg.seed, direction, p);
            let mut rec = vec![0.0; n_nodes];
            let mut x = start(&mut rng);
            let mut escaped = false;
            for s in 0..=n_steps {
                // node index in forward time
                let k = match direction {
                    Direction::Forward => s,
                    Direction::Backward => n_steps - s,
                };
                if k % stride == 0 {
                    rec[k / stride] = x;
                }
                if s == n_steps {
                    break;
                }
                let g: f64 = rng.sample(StandardNormal);
                if escaped {
                    continue;
                }
                let b = interpolate(&grid, &drift[k], x);
                let next = match direction {
                    Direction::Forward => x + b * dt + kick * g,
                    Direction::Backward => x - b * dt + kick * g,
                };
                if next < lo || next > hi || !next.is_finite() {
                    escaped = true;
                } else {
                    x = next;
                }
            }
            (rec, escaped)
        })
        .collect();

    let mut positions = Vec::with_capacity(cfg.n_paths * n_nodes);
    let mut escaped = Vec::with_capacity(cfg.n_paths);
    for (row, e) in rows {
        positions.extend_from_slice(&row);
        escaped.push(e);
    }
    let n_escaped = escaped.iter().filter(|&&e| e).count();
    if n_escaped as f64 > MAX_ESCAPE_FRACTION * cfg.n_paths as f64 {
        return Err(Error::TooManyEscapes { escaped: n_escaped, total: cfg.n_paths });
    }
    Ok(PathEnsemble { grid, tgrid, stride, direction, config: *cfg, n_nodes, positions, escaped })
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub count: usize,
}

impl Estimate {
    pub fn from_samples(xs: impl IntoIterator<Item = f64>) -> Self {
        // two passes for a stable variance
        let xs: Vec<f64> = xs.into_iter().collect();
        let n = xs.len();
        if n == 0 {
            return Self { mean: f64::NAN, stderr: f64::NAN, count: 0 };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = if n > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
        Self { mean, stderr: (var / n as f64).sqrt(), count: n }
    }
}

/// Per-node function built from grid fields by linear interpolation.
pub fn field_fn(fields: &[ScalarField]) -> impl Fn(usize, f64) -> f64 + Sync + '_ {
    move |j, x| fields[j].interpolate(x)
}

/// `E[f(xi(t_j), j)]` at every recorded node, over the retained paths.
pub fn ensemble_expectation(ens: &PathEnsemble, f: impl Fn(usize, f64) -> f64 + Sync) -> Vec<Estimate> {
    (0..ens.n_nodes).map(|j| Estimate::from_samples(ens.retained().map(|p| f(j, ens.path(p)[j])))).collect()
}

/// Trapezoidal time integral of `f` along each retained path.
pub fn path_time_integrals(ens: &PathEnsemble, f: impl Fn(usize, f64) -> f64 + Sync) -> Vec<f64> {
    let dt = ens.tgrid.dt();
    ens.retained()
        .map(|p| {
            let vals: Vec<f64> = ens.path(p).iter().enumerate().map(|(j, &x)| f(j, x)).collect();
            trapezoid(&vals, dt)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sign {
    Plus,
    Minus,
}

/// One position bin of a conditional-derivative estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinEstimate {
    pub center: f64,
    /// Mean position of the paths in the bin.
    pub mean_x: f64,
    pub estimate: Estimate,
    pub low_statistics: bool,
}

/// `D± f` conditioned on the position at recorded node `j`, by binning.
pub fn conditional_derivative_estimate(
    ens: &PathEnsemble,
    f: impl Fn(usize, f64) -> f64 + Sync,
    sign: Sign,
    j: usize,
) -> Result<Vec<BinEstimate>> {
    if ens.n_paths() < MIN_CONDITIONAL_PATHS {
        return Err(Error::LowStatistics(format!(
            "conditional estimates need at least {MIN_CONDITIONAL_PATHS} paths, ensemble has {}",
            ens.n_paths()
        )));
    }
    if j == 0 || j + 1 >= ens.n_nodes {
        return Err(Error::InvalidInput(format!("node {j} is not interior")));
    }
    let dt = ens.tgrid.dt();
    let mut xs = ens.marginal(j);
    xs.sort_by(f64::total_cmp);
    let tail = 0.5 * (1.0 - BIN_MASS);
    let q = |p: f64| xs[((p * (xs.len() - 1) as f64).round() as usize).min(xs.len() - 1)];
    let (lo, hi) = (q(tail), q(1.0 - tail));
    let width = (hi - lo) / CONDITIONAL_BINS as f64;
    if !(width > 0.0) {
        return Err(Error::LowStatistics("ensemble marginal has no spread".into()));
    }
    let mut bins: Vec<(Vec<f64>, Vec<f64>)> = vec![(Vec::new(), Vec::new()); CONDITIONAL_BINS];
    for p in ens.retained() {
        let path = ens.path(p);
        let x = path[j];
        if x < lo || x > hi {
            continue;
        }
        let b = (((x - lo) / width) as usize).min(CONDITIONAL_BINS - 1);
        let d = match sign {
            Sign::Plus => (f(j + 1, path[j + 1]) - f(j, x)) / dt,
            Sign::Minus => (f(j, x) - f(j - 1, path[j - 1])) / dt,
        };
        bins[b].0.push(x);
        bins[b].1.push(d);
    }
    Ok(bins
        .into_iter()
        .enumerate()
        .map(|(b, (xs, ds))| {
            let n = xs.len();
            BinEstimate {
                center: lo + (b as f64 + 0.5) * width,
                mean_x: if n > 0 { xs.iter().sum::<f64>() / n as f64 } else { f64::NAN },
                estimate: Estimate::from_samples(ds),
                low_statistics: n < MIN_BIN_OCCUPANCY,
            }
        })
        .collect())
}

/// Writes `<stem>.bin` (little-endian f64, one row per path, one column per
/// recorded node) and the `<stem>.meta` key-value sidecar.
pub fn write_ensemble(ens: &PathEnsemble, stem: &Path, scenario: &str) -> Result<(PathBuf, PathBuf)> {
    let bin = stem.with_extension("bin");
    let meta = stem.with_extension("meta");
    let mut bytes = Vec::with_capacity(ens.positions.len() * 8);
    for x in &ens.positions {
        bytes.extend_from_slice(&x.to_le_bytes());
    }
    fs::write(&bin, bytes)?;
    let mut m = fs::File::create(&meta)?;
    let cfg = &ens.config;
    writeln!(m, "scenario = {scenario}")?;
    writeln!(m, "direction = {}", ens.direction)?;
    writeln!(m, "seed = {}", cfg.seed)?;
    writeln!(m, "n_paths = {}", ens.n_paths())?;
    writeln!(m, "n_nodes = {}", ens.n_nodes)?;
    writeln!(m, "n_escaped = {}", ens.n_escaped())?;
    writeln!(m, "record_stride = {}", ens.stride)?;
    writeln!(m, "grid.x_min = {:?}", ens.grid.x_min())?;
    writeln!(m, "grid.x_max = {:?}", ens.grid.x_max())?;
    writeln!(m, "grid.n_points = {}", ens.grid.len())?;
    writeln!(m, "time.t_start = {:?}", ens.tgrid.t_start())?;
    writeln!(m, "time.t_end = {:?}", ens.tgrid.t_end())?;
    writeln!(m, "time.n_steps = {}", ens.tgrid.n_steps() * ens.stride)?;
    writeln!(m, "step_rule = euler_maruyama")?;
    writeln!(m, "interpolation = linear_in_x")?;
    writeln!(m, "layout = row_major_path_by_node_f64_le")?;
    Ok((bin, meta))
}

/// Reads a matrix written by [`write_ensemble`] back as rows.
pub fn read_ensemble_bin(path: &Path, n_nodes: usize) -> Result<Vec<Vec<f64>>> {
    let bytes = fs::read(path)?;
    if n_nodes == 0 || bytes.len() % (8 * n_nodes) != 0 {
        return Err(Error::InvalidInput(format!("{} is not a matrix with {n_nodes} columns", path.display())));
    }
    let vals: Vec<f64> =
        bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect();
    Ok(vals.chunks(n_nodes).map(<[f64]>::to_vec).collect())
}
