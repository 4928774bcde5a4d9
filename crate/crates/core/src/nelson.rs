//! Residuals of the dynamical identities assembled from grid fields: osmotic
//! relation, continuity, Nelson's two equations, the drift dynamics, the
//! forward/backward PDEs, Newton's law and both Fokker–Planck equations.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::fields::{gradient, PhysicsParams, Potential, ScalarField, SpatialGrid, Unit};
use crate::history::{
    ddt_series, grad_series, lap_series, residual_mask, weighted_l2, zip2, DensityHistory, Series,
};
use crate::sampler::{ks_distance, PathEnsemble};
use crate::schrodinger::{DriftHistory, WavefunctionHistory};

/// Fewest paths accepted by [`born_check`].
pub const MIN_BORN_PATHS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EquationId {
    Osmotic,
    Continuity,
    Nelson1,
    Nelson2,
    FwdDyn,
    BwdDyn,
    FwdPde,
    BwdPde,
    /// Forward minus backward PDE.
    Combined,
    FpFwd,
    FpBwd,
    Newton,
}

impl EquationId {
    pub const ALL: [EquationId; 12] = [
        EquationId::Osmotic,
        EquationId::Continuity,
        EquationId::Nelson1,
        EquationId::Nelson2,
        EquationId::FwdDyn,
        EquationId::BwdDyn,
        EquationId::FwdPde,
        EquationId::BwdPde,
        EquationId::Combined,
        EquationId::FpFwd,
        EquationId::FpBwd,
        EquationId::Newton,
    ];

    pub fn id(&self) -> &'static str {
        match self {
            EquationId::Osmotic => "osmotic",
            EquationId::Continuity => "continuity",
            EquationId::Nelson1 => "nelson1",
            EquationId::Nelson2 => "nelson2",
            EquationId::FwdDyn => "fwd_dyn",
            EquationId::BwdDyn => "bwd_dyn",
            EquationId::FwdPde => "fwd_pde",
            EquationId::BwdPde => "bwd_pde",
            EquationId::Combined => "combined_pde",
            EquationId::FpFwd => "fp_fwd",
            EquationId::FpBwd => "fp_bwd",
            EquationId::Newton => "newton",
        }
    }
}

impl fmt::Display for EquationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for EquationId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EquationId::ALL.into_iter().find(|e| e.id() == s).ok_or_else(|| Error::UnknownEquation(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    /// `sqrt(\int rho r^2 dx)` over the residual mask.
    WeightedL2,
    MaxOnMask,
    /// Kolmogorov–Smirnov distance between two laws.
    KolmogorovSmirnov,
}

impl NormKind {
    pub fn id(&self) -> &'static str {
        match self {
            NormKind::WeightedL2 => "weighted_l2",
            NormKind::MaxOnMask => "max_on_mask",
            NormKind::KolmogorovSmirnov => "ks",
        }
    }
}

/// One residual: aggregate value (max over the evaluated nodes) and the
/// per-node breakdown; `None` marks nodes that were not evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    pub name: String,
    pub norm_kind: NormKind,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub per_node: Vec<Option<f64>>,
}

impl ResidualReport {
    pub fn from_nodes(name: impl Into<String>, norm_kind: NormKind, per_node: Vec<Option<f64>>, tolerance: f64) -> Self {
        let value = per_node.iter().flatten().fold(0.0_f64, |a, &b| a.max(b));
        // a NaN anywhere must fail the check
        let value = if per_node.iter().flatten().any(|v| v.is_nan()) { f64::NAN } else { value };
        Self { name: name.into(), norm_kind, value, tolerance, pass: value <= tolerance, per_node }
    }
}

/// `phi` on the grid and its gradient.
#[derive(Debug, Clone)]
pub struct PotentialField {
    phi: ScalarField,
    gradient_phi: ScalarField,
}

impl PotentialField {
    pub fn new(potential: Potential, mass: f64, grid: SpatialGrid) -> Result<Self> {
        let phi = ScalarField::from_fn(grid, Unit::Energy, |x| potential.value(x, mass))?;
        let gradient_phi = ScalarField::new(grid, gradient(phi.values(), grid.dx()), Unit::Other)?;
        Ok(Self { phi, gradient_phi })
    }

    pub fn from_params(params: &PhysicsParams, grid: SpatialGrid) -> Result<Self> {
        Self::new(params.potential(), params.mass(), grid)
    }

    pub fn phi(&self) -> &ScalarField {
        &self.phi
    }

    pub fn gradient_phi(&self) -> &ScalarField {
        &self.gradient_phi
    }
}

fn check_inputs(drifts: &DriftHistory, rho: &DensityHistory) -> Result<()> {
    if drifts.grid() != rho.grid() || drifts.tgrid() != rho.tgrid() {
        return Err(Error::InvalidInput("drifts and density come from different grids".into()));
    }
    if drifts.tgrid().n_nodes() < 3 {
        return Err(Error::InvalidInput("residuals need at least three time nodes".into()));
    }
    Ok(())
}

/// `D+ f = df/dt + b+ grad f + nu lap f`, `D- f = df/dt + b- grad f - nu lap f`.
pub(crate) struct Stochastic<'a> {
    pub b_plus: &'a [Vec<f64>],
    pub b_minus: &'a [Vec<f64>],
    pub nu: f64,
    pub dx: f64,
    pub dt: f64,
}

impl Stochastic<'_> {
    pub fn d_plus(&self, f: &[Vec<f64>]) -> Series {
        self.derivative(f, self.b_plus, 1.0)
    }

    pub fn d_minus(&self, f: &[Vec<f64>]) -> Series {
        self.derivative(f, self.b_minus, -1.0)
    }

    fn derivative(&self, f: &[Vec<f64>], b: &[Vec<f64>], sign: f64) -> Series {
        let dt = ddt_series(f, self.dt);
        let g = grad_series(f, self.dx);
        let l = lap_series(f, self.dx);
        (0..f.len())
            .map(|k| (0..f[k].len()).map(|i| dt[k][i] + b[k][i] * g[k][i] + sign * self.nu * l[k][i]).collect())
            .collect()
    }
}

/// Pointwise residual field of `eq` at every node and grid point.
///
/// Time derivatives are central on interior nodes; the two end nodes carry
/// one-sided values and are excluded from aggregation by [`pde_residual`].
pub fn residual_field(
    eq: EquationId,
    drifts: &DriftHistory,
    rho: &DensityHistory,
    potential: &PotentialField,
    params: &PhysicsParams,
) -> Result<Series> {
    check_inputs(drifts, rho)?;
    let (m, nu) = (params.mass(), params.nu());
    let beta = params.beta();
    let dx = drifts.grid().dx();
    let dt = drifts.tgrid().dt();
    let (bp, bm, v, u) = (drifts.b_plus(), drifts.b_minus(), drifts.v(), drifts.u());
    let gphi = potential.gradient_phi().values();
    let with_phi = |s: Series, f: &dyn Fn(f64, f64) -> f64| -> Series {
        s.into_iter().map(|row| row.iter().zip(gphi).map(|(a, g)| f(*a, *g)).collect()).collect()
    };
    let g = |s: &[Vec<f64>]| grad_series(s, dx);
    let l = |s: &[Vec<f64>]| lap_series(s, dx);
    let ddt = |s: &[Vec<f64>]| ddt_series(s, dt);
    let ops = Stochastic { b_plus: bp, b_minus: bm, nu, dx, dt };
    // (D+ + D-) grad ln rho
    let sym_log = || {
        let gl = g(rho.ln_rho());
        zip2(&ops.d_plus(&gl), &ops.d_minus(&gl), |a, b| a + b)
    };

    let field = match eq {
        EquationId::Osmotic => {
            let gl = g(rho.ln_rho());
            let d = zip2(bp, bm, |a, b| a - b);
            zip2(&d, &gl, |a, b| a - 2.0 * nu * b)
        }
        EquationId::Continuity => {
            let flux: Series = (0..bp.len())
                .map(|k| (0..bp[k].len()).map(|i| 0.5 * (bp[k][i] + bm[k][i]) * rho.rho()[k][i]).collect())
                .collect();
            zip2(&ddt(rho.rho()), &g(&flux), |a, b| a + b)
        }
        EquationId::Nelson1 => {
            let vu = zip2(v, u, |a, b| a * b);
            let s = zip2(&ddt(u), &l(v), |a, b| a + nu * b);
            zip2(&s, &g(&vu), |a, b| a + b)
        }
        EquationId::Nelson2 => {
            let (gu, gv, lu) = (g(u), g(v), l(u));
            let mut rhs: Series = Vec::with_capacity(u.len());
            for k in 0..u.len() {
                rhs.push((0..u[k].len()).map(|i| u[k][i] * gu[k][i] - v[k][i] * gv[k][i] + nu * lu[k][i]).collect());
            }
            let rhs = with_phi(rhs, &|a, gp| a - gp / m);
            zip2(&ddt(v), &rhs, |a, b| a - b)
        }
        EquationId::FwdDyn | EquationId::BwdDyn => {
            let (gbp, gbm) = (g(bp), g(bm));
            let (lbp, lbm) = (l(bp), l(bm));
            let mut rhs: Series = Vec::with_capacity(bp.len());
            for k in 0..bp.len() {
                rhs.push(
                    (0..bp[k].len())
                        .map(|i| {
                            let (p, q) = (bp[k][i], bm[k][i]);
                            if eq == EquationId::FwdDyn {
                                0.5 * (-(p * gbp[k][i] + q * gbp[k][i]) - (p * gbm[k][i] - q * gbm[k][i]))
                                    - nu * lbm[k][i]
                            } else {
                                0.5 * ((p * gbp[k][i] - q * gbp[k][i]) - (p * gbm[k][i] + q * gbm[k][i]))
                                    + nu * lbp[k][i]
                            }
                        })
                        .collect(),
                );
            }
            let rhs = with_phi(rhs, &|a, gp| a - gp / m);
            let lhs = if eq == EquationId::FwdDyn { ddt(bp) } else { ddt(bm) };
            zip2(&lhs, &rhs, |a, b| a - b)
        }
        EquationId::FwdPde => {
            let s = zip2(&ops.d_minus(bp), &sym_log(), |a, b| m * a - 0.5 * beta * b);
            with_phi(s, &|a, gp| a + gp)
        }
        EquationId::BwdPde => {
            let s = zip2(&ops.d_plus(bm), &sym_log(), |a, b| m * a + 0.5 * beta * b);
            with_phi(s, &|a, gp| a + gp)
        }
        EquationId::Combined => {
            let f = residual_field(EquationId::FwdPde, drifts, rho, potential, params)?;
            let b = residual_field(EquationId::BwdPde, drifts, rho, potential, params)?;
            zip2(&f, &b, |a, b| a - b)
        }
        EquationId::FpFwd | EquationId::FpBwd => {
            let (b, sign) = if eq == EquationId::FpFwd { (bp, -1.0) } else { (bm, 1.0) };
            let flux = zip2(b, rho.rho(), |a, r| a * r);
            let s = zip2(&ddt(rho.rho()), &g(&flux), |a, b| a + b);
            zip2(&s, &l(rho.rho()), |a, b| a + sign * nu * b)
        }
        EquationId::Newton => {
            let s = zip2(&ops.d_plus(bm), &ops.d_minus(bp), |a, b| 0.5 * m * (a + b));
            with_phi(s, &|a, gp| a + gp)
        }
    };
    Ok(field)
}

/// rho-weighted L2 residual of `eq`, aggregated as the max over interior nodes.
pub fn pde_residual(
    eq: EquationId,
    drifts: &DriftHistory,
    rho: &DensityHistory,
    potential: &PotentialField,
    params: &PhysicsParams,
    tolerance: f64,
) -> Result<ResidualReport> {
    let field = residual_field(eq, drifts, rho, potential, params)?;
    Ok(aggregate(eq.id(), &field, drifts, rho, tolerance))
}

pub(crate) fn aggregate(
    name: &str,
    field: &[Vec<f64>],
    drifts: &DriftHistory,
    rho: &DensityHistory,
    tolerance: f64,
) -> ResidualReport {
    let mask = residual_mask(drifts.valid_mask());
    let dx = drifts.grid().dx();
    let n = field.len();
    let per_node = (0..n)
        .map(|k| {
            if k == 0 || k + 1 == n {
                None
            } else {
                Some(weighted_l2(&rho.rho()[k], &field[k], &mask[k], dx))
            }
        })
        .collect();
    ResidualReport::from_nodes(name, NormKind::WeightedL2, per_node, tolerance)
}

/// `b+ - b- - 2 nu grad ln rho`. Evaluated at every node, end nodes included,
/// since no time derivative is involved.
pub fn osmotic_residual(drifts: &DriftHistory, rho: &DensityHistory, params: &PhysicsParams, tolerance: f64) -> Result<ResidualReport> {
    let potential = PotentialField::new(Potential::Free, params.mass(), *drifts.grid())?;
    let field = residual_field(EquationId::Osmotic, drifts, rho, &potential, params)?;
    let mask = residual_mask(drifts.valid_mask());
    let dx = drifts.grid().dx();
    let per_node = (0..field.len()).map(|k| Some(weighted_l2(&rho.rho()[k], &field[k], &mask[k], dx))).collect();
    Ok(ResidualReport::from_nodes(EquationId::Osmotic.id(), NormKind::WeightedL2, per_node, tolerance))
}

/// Mean acceleration `a = (D+ b- + D- b+) / 2` at every node.
pub fn mean_acceleration(drifts: &DriftHistory, params: &PhysicsParams) -> Vec<ScalarField> {
    let ops = Stochastic {
        b_plus: drifts.b_plus(),
        b_minus: drifts.b_minus(),
        nu: params.nu(),
        dx: drifts.grid().dx(),
        dt: drifts.tgrid().dt(),
    };
    let a = zip2(&ops.d_plus(drifts.b_minus()), &ops.d_minus(drifts.b_plus()), |p, q| 0.5 * (p + q));
    a.into_iter()
        .map(|row| ScalarField::new(*drifts.grid(), row, Unit::Acceleration).expect("finite acceleration"))
        .collect()
}

/// KS distance between the ensemble marginal and `|psi|^2` at each recorded
/// node in `nodes` (indices into the ensemble's recorded grid).
pub fn born_check(
    history: &WavefunctionHistory,
    ens: &PathEnsemble,
    nodes: &[usize],
    tolerance: f64,
) -> Result<ResidualReport> {
    if ens.n_paths() < MIN_BORN_PATHS {
        return Err(Error::LowStatistics(format!(
            "born check needs at least {MIN_BORN_PATHS} paths, ensemble has {}",
            ens.n_paths()
        )));
    }
    if history.grid() != ens.grid() {
        return Err(Error::InvalidInput("ensemble and wavefunction use different spatial grids".into()));
    }
    let stride = ens.record_stride();
    let mut per_node = vec![None; ens.tgrid().n_nodes()];
    for &j in nodes {
        if j >= ens.tgrid().n_nodes() {
            return Err(Error::InvalidInput(format!("recorded node {j} out of range")));
        }
        let k = j * stride;
        let psi = history
            .psi()
            .get(k)
            .ok_or_else(|| Error::InvalidInput(format!("wavefunction has no time node {k}")))?;
        let rho: Vec<f64> = psi.values().iter().map(|z| z.norm_sqr()).collect();
        per_node[j] = Some(ks_distance(&ens.marginal(j), history.grid(), &rho)?);
    }
    Ok(ResidualReport::from_nodes("born", NormKind::KolmogorovSmirnov, per_node, tolerance))
}
