//! Time-indexed density plus the per-node stencil helpers shared by the
//! residual, information and variational modules.

use crate::error::{Error, Result};
use crate::fields::{erode, gradient, laplacian, trapezoid, ScalarField, SpatialGrid, TimeGrid, Unit};
use crate::schrodinger::WavefunctionHistory;

/// Points dropped from the edge of the density mask before residuals are
/// aggregated, on top of the one point already removed from the drift mask.
/// Second-derivative stencils of `ln rho` reach that far into the clamped tail.
pub const RESIDUAL_EROSION: usize = 3;

/// A field sampled on every node of a time grid, `series[k][i]`.
pub type Series = Vec<Vec<f64>>;

/// `rho(x, t)` with its log and the `rho >= floor` mask.
#[derive(Debug, Clone)]
pub struct DensityHistory {
    grid: SpatialGrid,
    tgrid: TimeGrid,
    rho: Series,
    ln_rho: Series,
    mask: Vec<Vec<bool>>,
    floor: f64,
}

impl DensityHistory {
    pub fn new(grid: SpatialGrid, tgrid: TimeGrid, rho: Series, floor: f64) -> Result<Self> {
        if !(floor > 0.0) {
            return Err(Error::InvalidInput(format!("density floor must be positive, got {floor}")));
        }
        if rho.len() != tgrid.n_nodes() || rho.iter().any(|r| r.len() != grid.len()) {
            return Err(Error::InvalidInput("density history does not match the grids".into()));
        }
        if let Some(k) = rho.iter().position(|r| r.iter().any(|p| !p.is_finite() || *p < 0.0)) {
            return Err(Error::InvalidInput(format!("negative or non-finite density at time node {k}")));
        }
        let ln_rho = rho.iter().map(|r| r.iter().map(|p| p.max(floor).ln()).collect()).collect();
        let mask = rho.iter().map(|r| r.iter().map(|&p| p >= floor).collect()).collect();
        Ok(Self { grid, tgrid, rho, ln_rho, mask, floor })
    }

    /// `rho = |psi|^2` on every node of the history.
    pub fn from_wavefunction(history: &WavefunctionHistory, floor: f64) -> Result<Self> {
        let rho = history.psi().iter().map(|p| p.values().iter().map(|z| z.norm_sqr()).collect()).collect();
        Self::new(*history.grid(), *history.tgrid(), rho, floor)
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn tgrid(&self) -> &TimeGrid {
        &self.tgrid
    }

    pub fn rho(&self) -> &[Vec<f64>] {
        &self.rho
    }

    /// `ln max(rho, floor)`.
    pub fn ln_rho(&self) -> &[Vec<f64>] {
        &self.ln_rho
    }

    pub fn mask(&self) -> &[Vec<bool>] {
        &self.mask
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn field(&self, node: usize) -> ScalarField {
        ScalarField::new(self.grid, self.rho[node].clone(), Unit::Density).expect("finite density")
    }

    /// `E[f]` at one node, restricted to `mask`.
    pub fn expect_at(&self, node: usize, f: &[f64], mask: &[bool]) -> f64 {
        masked_expectation(&self.rho[node], f, mask, self.grid.dx())
    }

    /// `E[f]` at every node on the density mask.
    pub fn expect(&self, f: &[Vec<f64>]) -> Vec<f64> {
        (0..self.rho.len()).map(|k| self.expect_at(k, &f[k], &self.mask[k])).collect()
    }
}

pub(crate) fn masked_expectation(rho: &[f64], f: &[f64], mask: &[bool], dx: f64) -> f64 {
    let prod: Vec<f64> = rho.iter().zip(f).zip(mask).map(|((r, v), &m)| if m { r * v } else { 0.0 }).collect();
    trapezoid(&prod, dx)
}

/// `sqrt(\int_mask rho r^2 dx)`.
pub(crate) fn weighted_l2(rho: &[f64], r: &[f64], mask: &[bool], dx: f64) -> f64 {
    let sq: Vec<f64> = r.iter().map(|v| v * v).collect();
    masked_expectation(rho, &sq, mask, dx).max(0.0).sqrt()
}

pub(crate) fn grad_series(s: &[Vec<f64>], dx: f64) -> Series {
    s.iter().map(|f| gradient(f, dx)).collect()
}

pub(crate) fn lap_series(s: &[Vec<f64>], dx: f64) -> Series {
    s.iter().map(|f| laplacian(f, dx)).collect()
}

/// Time derivative: central differences on interior nodes, one-sided
/// second order at the two ends.
pub(crate) fn ddt_series(s: &[Vec<f64>], dt: f64) -> Series {
    let n = s.len();
    assert!(n >= 3, "time derivative needs at least three nodes");
    let inv = 1.0 / (2.0 * dt);
    let row = |f: &dyn Fn(usize) -> f64, len: usize| (0..len).map(f).collect::<Vec<f64>>();
    let len = s[0].len();
    let mut out = Vec::with_capacity(n);
    out.push(row(&|i| (-3.0 * s[0][i] + 4.0 * s[1][i] - s[2][i]) * inv, len));
    for k in 1..n - 1 {
        out.push(row(&|i| (s[k + 1][i] - s[k - 1][i]) * inv, len));
    }
    out.push(row(&|i| (3.0 * s[n - 1][i] - 4.0 * s[n - 2][i] + s[n - 3][i]) * inv, len));
    out
}

/// Pointwise combination of two series.
pub(crate) fn zip2(a: &[Vec<f64>], b: &[Vec<f64>], f: impl Fn(f64, f64) -> f64) -> Series {
    a.iter().zip(b).map(|(x, y)| x.iter().zip(y).map(|(p, q)| f(*p, *q)).collect()).collect()
}

/// Residual aggregation mask: the drift mask eroded by [`RESIDUAL_EROSION`].
pub(crate) fn residual_mask(valid: &[Vec<bool>]) -> Vec<Vec<bool>> {
    valid.iter().map(|m| erode(m, RESIDUAL_EROSION)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ddt_is_exact_for_quadratics_in_time() {
        let tg = TimeGrid::new(0.0, 1.0, 10).unwrap();
        let s: Series = (0..=10).map(|k| vec![tg.t(k).powi(2); 3]).collect();
        let d = ddt_series(&s, tg.dt());
        for k in 0..=10 {
            assert!((d[k][1] - 2.0 * tg.t(k)).abs() < 1e-12);
        }
    }

    #[test]
    fn masked_expectation_ignores_masked_points() {
        let rho = [0.0, 1.0, 1.0, 0.0];
        let f = [1e9, 1.0, 1.0, 1e9];
        let mask = [false, true, true, false];
        assert_eq!(masked_expectation(&rho, &f, &mask, 1.0), 2.0);
        assert_eq!(weighted_l2(&rho, &[0.0, 3.0, 3.0, 0.0], &mask, 1.0), 18.0_f64.sqrt());
    }

    #[test]
    fn rejects_negative_density() {
        let g = SpatialGrid::new(0.0, 1.0, 8).unwrap();
        let tg = TimeGrid::new(0.0, 1.0, 1).unwrap();
        let mut rho = vec![vec![1.0; 8]; 2];
        rho[1][3] = -1.0;
        assert!(DensityHistory::new(g, tg, rho, 1e-10).is_err());
    }
}
