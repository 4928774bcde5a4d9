//! The three Lagrangian families, their actions and augmented functionals,
//! the expectation identities linking them, and weak-form stationarity.

use std::fmt;

use crate::error::{Error, Result};
use crate::fields::{PhysicsParams, TimeGrid};
use crate::history::{grad_series, residual_mask, zip2, DensityHistory, Series};
use crate::info::{fisher_production, relative_entropy_theorem1};
use crate::nelson::{residual_field, EquationId, PotentialField};
use crate::sampler::{Estimate, PathEnsemble, Sign};
use crate::schrodinger::DriftHistory;

/// Perturbation profiles `sin(k pi (t - t_a) / T)`, `k = 1..=PERTURBATION_MODES`.
pub const PERTURBATION_MODES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    /// `b²m/2 - phi`.
    Y,
    /// `b²m/2 ± (hbar/2) div b± - phi`.
    G,
    /// `b²m/2 ± (hbar/2) div(b+ + b-) - phi`.
    E,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LagrangianKind {
    pub family: Family,
    pub direction: Sign,
}

impl LagrangianKind {
    pub const ALL: [LagrangianKind; 6] = [
        LagrangianKind { family: Family::Y, direction: Sign::Plus },
        LagrangianKind { family: Family::Y, direction: Sign::Minus },
        LagrangianKind { family: Family::G, direction: Sign::Plus },
        LagrangianKind { family: Family::G, direction: Sign::Minus },
        LagrangianKind { family: Family::E, direction: Sign::Plus },
        LagrangianKind { family: Family::E, direction: Sign::Minus },
    ];

    pub fn new(family: Family, direction: Sign) -> Self {
        Self { family, direction }
    }

    fn sign(&self) -> f64 {
        match self.direction {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

impl fmt::Display for LagrangianKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let fam = match self.family {
            Family::Y => "Y",
            Family::G => "G",
            Family::E => "E",
        };
        let dir = if self.direction == Sign::Plus { "plus" } else { "minus" };
        write!(f, "{fam}_{dir}")
    }
}

/// Deterministic perturbation `z(t)` with `z(t_a) = z(t_b) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationProcess {
    tgrid: TimeGrid,
    z: Vec<f64>,
}

impl PerturbationProcess {
    pub fn new(tgrid: TimeGrid, z: Vec<f64>) -> Result<Self> {
        if z.len() != tgrid.n_nodes() {
            return Err(Error::InvalidInput("perturbation does not cover the time grid".into()));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("perturbation must be finite".into()));
        }
        if z[0] != 0.0 || z[z.len() - 1] != 0.0 {
            return Err(Error::InvalidInput("perturbation must vanish at both endpoints".into()));
        }
        Ok(Self { tgrid, z })
    }

    /// `sin(k pi (t - t_a) / T)`, endpoints pinned to exactly zero.
    pub fn sine(tgrid: TimeGrid, k: usize) -> Self {
        let n = tgrid.n_steps();
        let z = (0..=n)
            .map(|j| if j == 0 || j == n { 0.0 } else { (k as f64 * std::f64::consts::PI * j as f64 / n as f64).sin() })
            .collect();
        Self { tgrid, z }
    }

    pub fn sine_family(tgrid: TimeGrid) -> Vec<Self> {
        (1..=PERTURBATION_MODES).map(|k| Self::sine(tgrid, k)).collect()
    }

    pub fn zero(tgrid: TimeGrid) -> Self {
        Self { tgrid, z: vec![0.0; tgrid.n_nodes()] }
    }

    pub fn scaled(&self, eps: f64) -> Self {
        Self { tgrid: self.tgrid, z: self.z.iter().map(|v| v * eps).collect() }
    }

    pub fn values(&self) -> &[f64] {
        &self.z
    }

    pub fn tgrid(&self) -> &TimeGrid {
        &self.tgrid
    }

    /// `dz/dt` by forward differences, the discrete `D± z` of a deterministic profile.
    fn rate(&self) -> Vec<f64> {
        let dt = self.tgrid.dt();
        self.z.windows(2).map(|w| (w[1] - w[0]) / dt).collect()
    }

    /// `sup|z| + sup|D+ z| + sup|D- z|`; for deterministic `z` both drifts
    /// of `z` equal `dz/dt`.
    pub fn norm(&self) -> f64 {
        let sup = |v: &[f64]| v.iter().fold(0.0_f64, |a, b| a.max(b.abs()));
        sup(&self.z) + 2.0 * sup(&self.rate())
    }
}

/// Value of an action or augmented functional with its ingredients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FunctionalValue {
    pub kind: LagrangianKind,
    pub action: f64,
    /// Relative entropy `H(rho±||rho∓)` entering with weight `-beta`.
    pub entropy_term: f64,
    /// Fisher production entering with weight `+alpha` (family G only).
    pub fisher_term: f64,
    pub total: f64,
    pub standard_error: f64,
}

impl FunctionalValue {
    /// `total - (action + alpha fisher - beta entropy)`.
    pub fn bookkeeping_defect(&self, params: &PhysicsParams) -> f64 {
        (self.total - (self.action + params.alpha() * self.fisher_term - params.beta() * self.entropy_term)).abs()
    }
}

fn check_inputs(drifts: &DriftHistory, rho: &DensityHistory, potential: &PotentialField) -> Result<()> {
    if drifts.grid() != rho.grid() || drifts.tgrid() != rho.tgrid() || potential.phi().grid() != drifts.grid() {
        return Err(Error::InvalidInput("drifts, density and potential come from different grids".into()));
    }
    Ok(())
}

/// Pointwise Lagrangian density at every node.
pub fn lagrangian_field(
    kind: LagrangianKind,
    drifts: &DriftHistory,
    potential: &PotentialField,
    params: &PhysicsParams,
) -> Series {
    let (m, hbar) = (params.mass(), params.hbar());
    let dx = drifts.grid().dx();
    let b = match kind.direction {
        Sign::Plus => drifts.b_plus(),
        Sign::Minus => drifts.b_minus(),
    };
    let phi = potential.phi().values();
    let div = match kind.family {
        Family::Y => None,
        Family::G => Some(grad_series(b, dx)),
        Family::E => Some(grad_series(&zip2(drifts.b_plus(), drifts.b_minus(), |p, q| p + q), dx)),
    };
    let s = kind.sign();
    (0..b.len())
        .map(|k| {
            (0..b[k].len())
                .map(|i| {
                    let base = 0.5 * m * b[k][i] * b[k][i] - phi[i];
                    match &div {
                        None => base,
                        Some(d) => base + s * 0.5 * hbar * d[k][i],
                    }
                })
                .collect()
        })
        .collect()
}

/// `\int E[L] dt` by grid expectation then time quadrature.
pub fn action(
    kind: LagrangianKind,
    drifts: &DriftHistory,
    rho: &DensityHistory,
    potential: &PotentialField,
    params: &PhysicsParams,
) -> Result<FunctionalValue> {
    check_inputs(drifts, rho, potential)?;
    let l = lagrangian_field(kind, drifts, potential, params);
    let a = crate::fields::trapezoid(&rho.expect(&l), rho.tgrid().dt());
    Ok(FunctionalValue { kind, action: a, entropy_term: 0.0, fisher_term: 0.0, total: a, standard_error: 0.0 })
}

/// `E[L]` per node.
pub fn expected_lagrangian(
    kind: LagrangianKind,
    drifts: &DriftHistory,
    rho: &DensityHistory,
    potential: &PotentialField,
    params: &PhysicsParams,
) -> Result<Vec<f64>> {
    check_inputs(drifts, rho, potential)?;
    Ok(rho.expect(&lagrangian_field(kind, drifts, potential, params)))
}

/// Augmented functional of the family: `A - beta H` (Y), `A + alpha I - beta H` (G), `A` (E).
pub fn augmented_functional(
    kind: LagrangianKind,
    drifts: &DriftHistory,
    rho: &DensityHistory,
    potential: &PotentialField,
    params: &PhysicsParams,
) -> Result<FunctionalValue> {
    let base = action(kind, drifts, rho, potential, params)?;
    let (entropy_term, fisher_term) = match kind.family {
        Family::E => (0.0, 0.0),
        family => {
            let (hpm, hmp) = relative_entropy_theorem1(drifts, rho, params)?;
            let h = if kind.direction == Sign::Plus { hpm } else { hmp };
            let f = if family == Family::G {
                let fp = fisher_production(drifts, rho, params)?;
                if kind.direction == Sign::Plus {
                    fp.plus
                } else {
                    fp.minus
                }
            } else {
                0.0
            };
            (h, f)
        }
    };
    let total = base.action + params.alpha() * fisher_term - params.beta() * entropy_term;
    Ok(FunctionalValue { entropy_term, fisher_term, total, ..base })
}

/// Monte-Carlo action: mean over paths of the time-integrated Lagrangian,
/// evaluated on the ensemble's recorded nodes.
pub fn ensemble_action(
    kind: LagrangianKind,
    ens: &PathEnsemble,
    drifts: &DriftHistory,
    potential: &PotentialField,
    params: &PhysicsParams,
) -> Result<Estimate> {
    if ens.grid() != drifts.grid() || ens.tgrid().t_end() != drifts.tgrid().t_end() {
        return Err(Error::InvalidInput("ensemble and drifts come from different grids".into()));
    }
    let l = lagrangian_field(kind, drifts, potential, params);
    let stride = ens.record_stride();
    let grid = *drifts.grid();
    let per_path = crate::sampler::path_time_integrals(ens, |j, x| crate::fields::interpolate(&grid, &l[j * stride], x));
    Ok(Estimate::from_samples(per_path))
}

/// Left side, right side and gap of one expectation identity at every node.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityRow {
    pub name: &'static str,
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
}

impl IdentityRow {
    pub fn max_gap(&self) -> f64 {
        self.lhs.iter().zip(&self.rhs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityReport {
    pub rows: Vec<IdentityRow>,
}

impl IdentityReport {
    pub fn row(&self, name: &str) -> Option<&IdentityRow> {
        self.rows.iter().find(|r| r.name == name)
    }
}

/// Names of the six identities relating each Lagrangian to `L_Y`.
pub const LAGRANGIAN_IDENTITIES: [&str; 6] = ["Y_plus", "Y_minus", "G_plus", "G_minus", "E_plus", "E_minus"];

/// Evaluates every Lagrangian expectation directly and against its stated
/// form in `(v, u, phi)`:
///
/// * `E[L_Y±] = E[L_Y ± m v u]`, `E[L_G±] = E[L_Y - m u²]`, `E[L_E±] = E[L_Y]`
///   with `L_Y = m v²/2 + m u²/2 - phi`;
/// * `G_plus_vs_minus`: `E[L_G+] = E[L_G-]`;
/// * `E_plus_corrected`/`E_minus_corrected`: `E[L_E±] = E[L_Y ∓ m v u]`, the
///   form that follows from integrating `div v` by parts;
/// * `by_parts`: `E[div b+] = -(1/nu) E[u b+]`.
pub fn expectation_identities(
    drifts: &DriftHistory,
    rho: &DensityHistory,
    potential: &PotentialField,
    params: &PhysicsParams,
) -> Result<IdentityReport> {
    check_inputs(drifts, rho, potential)?;
    let m = params.mass();
    let phi = potential.phi().values();
    let (v, u) = (drifts.v(), drifts.u());
    let ly: Series = (0..v.len())
        .map(|k| (0..v[k].len()).map(|i| 0.5 * m * (v[k][i] * v[k][i] + u[k][i] * u[k][i]) - phi[i]).collect())
        .collect();
    let vu = zip2(v, u, |a, b| m * a * b);
    let uu = zip2(u, u, |a, b| m * a * b);
    let e = |s: &[Vec<f64>]| rho.expect(s);
    let el = |f, d| expected_lagrangian(LagrangianKind::new(f, d), drifts, rho, potential, params);
    let e_ly = e(&ly);
    let e_vu = e(&vu);
    let e_uu = e(&uu);
    let add = |a: &[f64], b: &[f64], s: f64| a.iter().zip(b).map(|(x, y)| x + s * y).collect::<Vec<f64>>();

    let g_plus = el(Family::G, Sign::Plus)?;
    let g_minus = el(Family::G, Sign::Minus)?;
    let e_plus = el(Family::E, Sign::Plus)?;
    let e_minus = el(Family::E, Sign::Minus)?;
    let dx = drifts.grid().dx();
    let div_bp = e(&grad_series(drifts.b_plus(), dx));
    let ub = e(&zip2(u, drifts.b_plus(), |a, b| a * b)).iter().map(|x| -x / params.nu()).collect();

    let rows = vec![
        IdentityRow { name: "Y_plus", lhs: el(Family::Y, Sign::Plus)?, rhs: add(&e_ly, &e_vu, 1.0) },
        IdentityRow { name: "Y_minus", lhs: el(Family::Y, Sign::Minus)?, rhs: add(&e_ly, &e_vu, -1.0) },
        IdentityRow { name: "G_plus", lhs: g_plus.clone(), rhs: add(&e_ly, &e_uu, -1.0) },
        IdentityRow { name: "G_minus", lhs: g_minus.clone(), rhs: add(&e_ly, &e_uu, -1.0) },
        IdentityRow { name: "E_plus", lhs: e_plus.clone(), rhs: e_ly.clone() },
        IdentityRow { name: "E_minus", lhs: e_minus.clone(), rhs: e_ly.clone() },
        IdentityRow { name: "G_plus_vs_minus", lhs: g_plus, rhs: g_minus },
        IdentityRow { name: "E_plus_corrected", lhs: e_plus, rhs: add(&e_ly, &e_vu, -1.0) },
        IdentityRow { name: "E_minus_corrected", lhs: e_minus, rhs: add(&e_ly, &e_vu, 1.0) },
        IdentityRow { name: "by_parts", lhs: div_bp, rhs: ub },
    ];
    Ok(IdentityReport { rows })
}

/// Pairings of the Euler–Lagrange residual with each perturbation.
#[derive(Debug, Clone, PartialEq)]
pub struct WeakFormReport {
    pub direction: Sign,
    /// `\int E[G± z] dt` per perturbation.
    pub pairings: Vec<f64>,
    pub norms: Vec<f64>,
    /// rho-weighted L2 norm of the residual field, max over interior nodes.
    pub residual_norm: f64,
}

impl WeakFormReport {
    /// Largest `|pairing| / ||z||` (zero profiles are skipped).
    pub fn worst_relative(&self) -> f64 {
        self.pairings
            .iter()
            .zip(&self.norms)
            .filter(|(_, &n)| n > 0.0)
            .map(|(p, n)| p.abs() / n)
            .fold(0.0, f64::max)
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        self.pairings.iter().zip(&self.norms).all(|(p, n)| p.abs() <= tolerance * n)
    }
}

/// Weak-form first variation: pairs the residual of the forward (`Plus`) or
/// backward (`Minus`) PDE with every `z` in the family.
pub fn first_variation_weak(
    direction: Sign,
    drifts: &DriftHistory,
    rho: &DensityHistory,
    potential: &PotentialField,
    params: &PhysicsParams,
    z_family: &[PerturbationProcess],
) -> Result<WeakFormReport> {
    check_inputs(drifts, rho, potential)?;
    for z in z_family {
        if z.tgrid() != drifts.tgrid() {
            return Err(Error::InvalidInput("perturbation is not on the drift time grid".into()));
        }
        if z.z[0] != 0.0 || z.z[z.z.len() - 1] != 0.0 {
            return Err(Error::InvalidInput("perturbation must vanish at both endpoints".into()));
        }
    }
    let eq = if direction == Sign::Plus { EquationId::FwdPde } else { EquationId::BwdPde };
    let field = residual_field(eq, drifts, rho, potential, params)?;
    let mask = residual_mask(drifts.valid_mask());
    let slice: Vec<f64> = (0..field.len()).map(|k| rho.expect_at(k, &field[k], &mask[k])).collect();
    let dt = drifts.tgrid().dt();
    let pairings = z_family
        .iter()
        .map(|z| {
            let prod: Vec<f64> = slice.iter().zip(&z.z).map(|(g, zz)| g * zz).collect();
            crate::fields::trapezoid(&prod, dt)
        })
        .collect();
    let residual_norm = crate::nelson::pde_residual(eq, drifts, rho, potential, params, f64::INFINITY)?.value;
    Ok(WeakFormReport { direction, pairings, norms: z_family.iter().map(PerturbationProcess::norm).collect(), residual_norm })
}

/// Largest discrepancy between the change in discrete path velocity under
/// `xi -> xi + z` and the discrete velocity of `z`, forward and backward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathVariationReport {
    pub forward: f64,
    pub backward: f64,
}

pub fn path_variation_identity(ens: &PathEnsemble, z: &PerturbationProcess) -> Result<PathVariationReport> {
    if z.tgrid() != ens.tgrid() {
        return Err(Error::InvalidInput("perturbation is not on the ensemble's recorded nodes".into()));
    }
    let moved = ens.perturbed(&z.z)?;
    let dt = ens.tgrid().dt();
    let n = ens.tgrid().n_nodes();
    let zr = z.rate();
    let (mut fwd, mut bwd) = (0.0_f64, 0.0_f64);
    for p in 0..ens.n_paths() {
        let (a, b) = (ens.path(p), moved.path(p));
        for j in 0..n - 1 {
            let dv_plus = (b[j + 1] - b[j]) / dt - (a[j + 1] - a[j]) / dt;
            fwd = fwd.max((dv_plus - zr[j]).abs());
        }
        for j in 1..n {
            let dv_minus = (b[j] - b[j - 1]) / dt - (a[j] - a[j - 1]) / dt;
            bwd = bwd.max((dv_minus - zr[j - 1]).abs());
        }
    }
    Ok(PathVariationReport { forward: fwd, backward: bwd })
}
