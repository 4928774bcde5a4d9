//! Stage orchestration: solve → sample → verify → report.
//!
//! [`execute`] is pure (no file I/O) so its results can be compared directly;
//! [`write_outputs`] turns an outcome into files.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{emit, RunConfig};
use crate::error::{Error, Result};
use crate::fields::{trapezoid, PhysicsParams, Potential, SpatialGrid, TimeGrid};
use crate::history::{zip2, DensityHistory};
use crate::info::{
    bayes_reversal, bohm_identity, chain_path_measures, chain_relative_entropy, entropy_report, fisher_production,
    path_measures_with_backward, relative_entropy_corollary1, relative_entropy_theorem1, DiscreteChain,
};
use crate::nelson::{aggregate, born_check, osmotic_residual, pde_residual, residual_field, EquationId, PotentialField};
use crate::report::{density_rows, fields_csv, plot_csv, render_report, CheckResult, PlotRow};
use crate::sampler::{
    ensemble_expectation, path_time_integrals, sample_backward, sample_forward, write_ensemble, PathEnsemble, Sign,
};
use crate::scenario::Scenario;
use crate::schrodinger::{decompose, extract_drifts, propagate, DriftHistory, WavefunctionHistory};
use crate::variational::{
    path_variation_identity, augmented_functional, expectation_identities, first_variation_weak, Family, LagrangianKind,
    PerturbationProcess, LAGRANGIAN_IDENTITIES,
};

/// Residuals below this are at round-off and carry no convergence information.
pub const CONVERGENCE_NOISE_FLOOR: f64 = 1e-8;
/// Required error reduction under simultaneous `dx, dt` halving.
pub const CONVERGENCE_FACTOR: f64 = 3.0;
/// Randomized chains per chain check.
pub const CHAIN_TRIALS: usize = 128;

/// Residual equations checked individually (osmotic has its own tolerance;
/// the combined PDE enters through `pde_sum`).
pub const RESIDUAL_EQUATIONS: [EquationId; 10] = [
    EquationId::Continuity,
    EquationId::Nelson1,
    EquationId::Nelson2,
    EquationId::FwdDyn,
    EquationId::BwdDyn,
    EquationId::FwdPde,
    EquationId::BwdPde,
    EquationId::FpFwd,
    EquationId::FpBwd,
    EquationId::Newton,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CheckId {
    NormDrift,
    Stationarity,
    Spreading,
    PeakTrajectory,
    Osmotic,
    Residual(EquationId),
    PdeSum,
    Convergence,
    RelativeEntropyAgreement,
    RelativeEntropyZero,
    RelativeEntropyAntisymmetry,
    FisherAgreement,
    FisherGroundValue,
    Bohm,
    ChainReversal,
    ChainDecomposition,
    ChainNonnegativity,
    BornForward,
    BornBackward,
    LagrangianIdentities,
    GSymmetry,
    FunctionalOffset,
    WeakFormPlus,
    WeakFormMinus,
    PathVariation,
    ExpectationSwap,
}

impl CheckId {
    pub fn all() -> Vec<CheckId> {
        let mut v = vec![
            CheckId::NormDrift,
            CheckId::Stationarity,
            CheckId::Spreading,
            CheckId::PeakTrajectory,
            CheckId::Osmotic,
        ];
        v.extend(RESIDUAL_EQUATIONS.iter().map(|&e| CheckId::Residual(e)));
        v.extend([
            CheckId::PdeSum,
            CheckId::Convergence,
            CheckId::RelativeEntropyAgreement,
            CheckId::RelativeEntropyZero,
            CheckId::RelativeEntropyAntisymmetry,
            CheckId::FisherAgreement,
            CheckId::FisherGroundValue,
            CheckId::Bohm,
            CheckId::ChainReversal,
            CheckId::ChainDecomposition,
            CheckId::ChainNonnegativity,
            CheckId::BornForward,
            CheckId::BornBackward,
            CheckId::LagrangianIdentities,
            CheckId::GSymmetry,
            CheckId::FunctionalOffset,
            CheckId::WeakFormPlus,
            CheckId::WeakFormMinus,
            CheckId::PathVariation,
            CheckId::ExpectationSwap,
        ]);
        v
    }

    /// Every check applicable to the scenario, in registry order.
    pub fn defaults_for(scenario: Scenario) -> Vec<CheckId> {
        Self::all().into_iter().filter(|c| c.applies_to(scenario)).collect()
    }

    pub fn id(&self) -> &'static str {
        match self {
            CheckId::NormDrift => "norm_drift",
            CheckId::Stationarity => "stationarity",
            CheckId::Spreading => "spreading",
            CheckId::PeakTrajectory => "peak_trajectory",
            CheckId::Osmotic => "osmotic",
            CheckId::Residual(e) => e.id(),
            CheckId::PdeSum => "pde_sum",
            CheckId::Convergence => "convergence",
            CheckId::RelativeEntropyAgreement => "relative_entropy_agreement",
            CheckId::RelativeEntropyZero => "relative_entropy_zero",
            CheckId::RelativeEntropyAntisymmetry => "relative_entropy_antisymmetry",
            CheckId::FisherAgreement => "fisher_agreement",
            CheckId::FisherGroundValue => "fisher_ground_value",
            CheckId::Bohm => "bohm",
            CheckId::ChainReversal => "chain_reversal",
            CheckId::ChainDecomposition => "chain_decomposition",
            CheckId::ChainNonnegativity => "chain_nonnegativity",
            CheckId::BornForward => "born_forward",
            CheckId::BornBackward => "born_backward",
            CheckId::LagrangianIdentities => "lagrangian_identities",
            CheckId::GSymmetry => "g_symmetry",
            CheckId::FunctionalOffset => "functional_offset",
            CheckId::WeakFormPlus => "weak_form_plus",
            CheckId::WeakFormMinus => "weak_form_minus",
            CheckId::PathVariation => "path_variation",
            CheckId::ExpectationSwap => "expectation_swap",
        }
    }

    pub fn applies_to(&self, scenario: Scenario) -> bool {
        match self {
            CheckId::Stationarity | CheckId::FisherGroundValue => scenario == Scenario::HarmonicGround,
            CheckId::Spreading => scenario == Scenario::FreePacket,
            CheckId::PeakTrajectory => scenario == Scenario::Coherent,
            CheckId::Convergence | CheckId::GSymmetry | CheckId::WeakFormPlus | CheckId::WeakFormMinus => {
                scenario.is_analytic()
            }
            _ => true,
        }
    }

    pub fn needs_sampling(&self) -> bool {
        matches!(self, CheckId::BornForward | CheckId::BornBackward | CheckId::PathVariation | CheckId::ExpectationSwap)
    }

    /// Tolerance of the check's gating rows on `scenario`.
    pub fn tolerance(&self, scenario: Scenario) -> f64 {
        let analytic = scenario.is_analytic();
        match self {
            CheckId::NormDrift => 1e-8,
            CheckId::Stationarity => 1e-6,
            CheckId::Spreading | CheckId::PeakTrajectory => 1e-4,
            CheckId::Osmotic => {
                if scenario == Scenario::HarmonicGround {
                    2e-6
                } else {
                    1e-4
                }
            }
            CheckId::Residual(_) => {
                if analytic {
                    5e-4
                } else {
                    2e-3
                }
            }
            CheckId::PdeSum => 1e-12,
            CheckId::Convergence => CONVERGENCE_FACTOR,
            CheckId::RelativeEntropyAgreement | CheckId::RelativeEntropyAntisymmetry => 2e-4,
            CheckId::RelativeEntropyZero => 5e-4,
            CheckId::FisherAgreement => 5e-4,
            CheckId::FisherGroundValue | CheckId::Bohm => 1e-4,
            CheckId::ChainReversal | CheckId::ChainDecomposition | CheckId::ChainNonnegativity => 1e-12,
            CheckId::BornForward => 0.02,
            CheckId::BornBackward => 0.03,
            CheckId::LagrangianIdentities => 1e-4,
            CheckId::GSymmetry => 1e-6,
            CheckId::FunctionalOffset => 5e-4,
            // relative to ||z||
            CheckId::WeakFormPlus | CheckId::WeakFormMinus => 5e-4,
            CheckId::PathVariation => 1e-9,
            CheckId::ExpectationSwap => 1e-12,
        }
    }
}

impl fmt::Display for CheckId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for CheckId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::all().into_iter().find(|c| c.id() == s).ok_or_else(|| Error::InvalidInput(format!("unknown check `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Solve,
    Sample,
    Verify,
    Report,
}

impl Stage {
    pub fn id(&self) -> &'static str {
        match self {
            Stage::Solve => "solve",
            Stage::Sample => "sample",
            Stage::Verify => "verify",
            Stage::Report => "report",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

/// A module error tagged with the stage it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct StageFailure {
    pub stage: Stage,
    pub error: Error,
}

impl fmt::Display for StageFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage `{}` failed: {}", self.stage, self.error)
    }
}

impl std::error::Error for StageFailure {}

fn at(stage: Stage) -> impl FnOnce(Error) -> StageFailure {
    move |error| StageFailure { stage, error }
}

/// Reference solution and everything derived from it on one grid pair.
#[derive(Debug, Clone)]
pub struct Solution {
    pub params: PhysicsParams,
    pub history: WavefunctionHistory,
    pub drifts: DriftHistory,
    pub rho: DensityHistory,
    pub potential: PotentialField,
    pub warnings: Vec<String>,
}

/// Propagates the scenario's initial state and extracts density and drifts;
/// `drift_shift` is added to both drifts afterwards (fault injection).
pub fn solve_on(
    scenario: Scenario,
    params: &PhysicsParams,
    grid: SpatialGrid,
    tgrid: TimeGrid,
    floor: f64,
    drift_shift: f64,
) -> Result<Solution> {
    let psi0 = scenario.initial_state(params, &grid)?;
    let history = propagate(&psi0, params, &grid, &tgrid)?;
    let ap = decompose(&history, floor)?;
    let warnings = ap
        .node_crossings()
        .iter()
        .map(|c| format!("node crossing: {c:?}"))
        .collect();
    let mut drifts = extract_drifts(&ap, params)?;
    if drift_shift != 0.0 {
        drifts = drifts.with_drift_shift(drift_shift);
    }
    let rho = DensityHistory::from_wavefunction(&history, floor)?;
    let potential = PotentialField::from_params(params, grid)?;
    Ok(Solution { params: *params, history, drifts, rho, potential, warnings })
}

pub fn solve(cfg: &RunConfig) -> Result<Solution> {
    solve_on(cfg.scenario, &cfg.params, cfg.grid, cfg.tgrid, cfg.density_floor, cfg.drift_shift)
}

#[derive(Debug, Clone)]
pub struct Ensembles {
    pub forward: PathEnsemble,
    pub backward: PathEnsemble,
}

/// Forward ensemble from `rho(t_a)`, backward ensemble from `rho(t_b)`.
pub fn sample_ensembles(cfg: &RunConfig, sol: &Solution) -> Result<Ensembles> {
    let sc = cfg.sampler()?;
    let last = sol.rho.tgrid().n_nodes() - 1;
    let forward = sample_forward(&sol.drifts, &sol.rho.field(0), &sol.params, &sc)?;
    let backward = sample_backward(&sol.drifts, &sol.rho.field(last), &sol.params, &sc)?;
    Ok(Ensembles { forward, backward })
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub config: RunConfig,
    pub stage: Stage,
    pub solution: Solution,
    pub ensembles: Option<Ensembles>,
    pub checks: Vec<CheckResult>,
    pub plot: Vec<PlotRow>,
}

impl RunOutcome {
    /// True iff every gating row passed.
    pub fn all_pass(&self) -> bool {
        self.checks.iter().filter(|c| c.gating).all(|c| c.pass)
    }

    pub fn failing(&self) -> Vec<&CheckResult> {
        self.checks.iter().filter(|c| c.gating && !c.pass).collect()
    }

    pub fn check(&self, id: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.id == id)
    }

    pub fn report_text(&self) -> String {
        render_report(self.config.format, &emit(&self.config), &self.checks, &self.solution.warnings)
    }
}

/// Runs the stages up to and including `until` inside a pool with the
/// configured thread count.
pub fn execute(cfg: &RunConfig, until: Stage) -> std::result::Result<RunOutcome, StageFailure> {
    let checked = if until == Stage::Solve { cfg.validate_without_seed() } else { cfg.validate() };
    checked.map_err(at(Stage::Solve))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| StageFailure { stage: Stage::Solve, error: Error::InvalidInput(e.to_string()) })?;
    pool.install(|| execute_inner(cfg, until))
}

fn execute_inner(cfg: &RunConfig, until: Stage) -> std::result::Result<RunOutcome, StageFailure> {
    let solution = solve(cfg).map_err(at(Stage::Solve))?;
    let wants_samples = until == Stage::Sample || (until >= Stage::Verify && cfg.needs_sampling());
    let ensembles = if wants_samples { Some(sample_ensembles(cfg, &solution).map_err(at(Stage::Sample))?) } else { None };
    let mut outcome = RunOutcome { config: cfg.clone(), stage: until, solution, ensembles, checks: Vec::new(), plot: Vec::new() };
    if until >= Stage::Verify {
        let mut ctx = Verifier { cfg, sol: &outcome.solution, ens: outcome.ensembles.as_ref(), rows: Vec::new(), plot: Vec::new() };
        for &c in &cfg.checks {
            ctx.run(c).map_err(at(Stage::Verify))?;
        }
        let (rows, plot) = (ctx.rows, ctx.plot);
        outcome.checks = rows;
        outcome.plot = plot;
    }
    if until == Stage::Report {
        let sol = &outcome.solution;
        let mut rows = density_rows(sol.drifts.grid(), &sol.rho, cfg.field_stride);
        rows.append(&mut outcome.plot);
        if let Ok(rep) = entropy_report(&sol.drifts, &sol.rho, &sol.params) {
            for t in &rep.terms {
                rows.push(PlotRow {
                    quantity: format!("entropy.{}.{}", t.headline, t.name),
                    x: None,
                    t: None,
                    value: t.value,
                    stderr: Some(t.stderr),
                });
            }
        }
        outcome.plot = rows;
    }
    Ok(outcome)
}

/// Writes the files belonging to the outcome's stage and returns their paths.
pub fn write_outputs(outcome: &RunOutcome) -> std::result::Result<Vec<PathBuf>, StageFailure> {
    let cfg = &outcome.config;
    let dir = &cfg.output_dir;
    let io = |e: std::io::Error| StageFailure { stage: Stage::Report, error: e.into() };
    std::fs::create_dir_all(dir).map_err(io)?;
    let mut files = Vec::new();
    let mut put = |name: &str, body: String| -> std::result::Result<(), StageFailure> {
        let p = dir.join(name);
        std::fs::write(&p, body).map_err(io)?;
        files.push(p);
        Ok(())
    };
    let sol = &outcome.solution;
    if cfg.dump_fields || outcome.stage == Stage::Solve {
        put("fields.csv", fields_csv(&sol.drifts, &sol.rho, cfg.field_stride))?;
    }
    if outcome.stage >= Stage::Verify {
        put(&format!("report.{}", cfg.format.extension()), outcome.report_text())?;
    }
    if outcome.stage == Stage::Report {
        put("plot.csv", plot_csv(&outcome.plot))?;
    }
    if let Some(ens) = &outcome.ensembles {
        if cfg.dump_ensembles || outcome.stage == Stage::Sample {
            for e in [&ens.forward, &ens.backward] {
                let stem = dir.join(format!("ensemble_{}", e.direction()));
                let (bin, meta) = write_ensemble(e, &stem, cfg.scenario.id()).map_err(|error| StageFailure { stage: Stage::Report, error })?;
                files.push(bin);
                files.push(meta);
            }
        }
    }
    Ok(files)
}

/// Convenience for callers that only need the rows of one scenario.
pub fn verify(cfg: &RunConfig) -> std::result::Result<RunOutcome, StageFailure> {
    execute(cfg, Stage::Verify)
}

pub fn report_path(cfg: &RunConfig) -> PathBuf {
    cfg.output_dir.join(format!("report.{}", cfg.format.extension()))
}

struct Verifier<'a> {
    cfg: &'a RunConfig,
    sol: &'a Solution,
    ens: Option<&'a Ensembles>,
    rows: Vec<CheckResult>,
    plot: Vec<PlotRow>,
}

impl<'a> Verifier<'a> {
    fn push(&mut self, r: CheckResult) {
        self.rows.push(r);
    }

    fn ensembles(&self) -> Result<&'a Ensembles> {
        self.ens.ok_or_else(|| Error::InvalidInput("sampling checks need ensembles".into()))
    }

    fn run(&mut self, c: CheckId) -> Result<()> {
        let scenario = self.cfg.scenario;
        let tol = c.tolerance(scenario);
        let sol = self.sol;
        let (drifts, rho, pot, params) = (&sol.drifts, &sol.rho, &sol.potential, &sol.params);
        let tg = *rho.tgrid();
        let grid = *rho.grid();
        match c {
            CheckId::NormDrift => self.push(CheckResult::at_most(c.id(), sol.history.max_norm_drift(), tol)),
            CheckId::Stationarity => {
                let r0 = &rho.rho()[0];
                let worst = rho
                    .rho()
                    .iter()
                    .flat_map(|r| r.iter().zip(r0).map(|(a, b)| (a - b).abs()))
                    .fold(0.0, f64::max);
                self.push(CheckResult::at_most(c.id(), worst, tol));
            }
            CheckId::Spreading => {
                let oracle = oracle(scenario, params)?;
                let xs = grid.points();
                let mut worst = 0.0_f64;
                for (k, r) in rho.rho().iter().enumerate() {
                    let m1 = trapezoid(&r.iter().zip(&xs).map(|(p, x)| p * x).collect::<Vec<_>>(), grid.dx());
                    let m2 = trapezoid(&r.iter().zip(&xs).map(|(p, x)| p * x * x).collect::<Vec<_>>(), grid.dx());
                    let var = m2 - m1 * m1;
                    worst = worst.max((var - oracle.variance(tg.t(k))).abs());
                    self.plot.push(PlotRow::series("variance", tg.t(k), var));
                }
                self.push(CheckResult::at_most(c.id(), worst, tol));
            }
            CheckId::PeakTrajectory => {
                let oracle = oracle(scenario, params)?;
                let mut worst = 0.0_f64;
                for (k, r) in rho.rho().iter().enumerate() {
                    let x = peak_position(&grid, r);
                    worst = worst.max((x - oracle.mean(tg.t(k))).abs());
                    self.plot.push(PlotRow::series("peak", tg.t(k), x));
                }
                self.push(CheckResult::at_most(c.id(), worst, tol));
            }
            CheckId::Osmotic => {
                let r = osmotic_residual(drifts, rho, params, tol)?;
                self.push(CheckResult::at_most(c.id(), r.value, tol));
            }
            CheckId::Residual(eq) => {
                let r = pde_residual(eq, drifts, rho, pot, params, tol)?;
                for (k, v) in r.per_node.iter().enumerate() {
                    if let Some(v) = v {
                        self.plot.push(PlotRow::series(&format!("residual.{}", eq.id()), tg.t(k), *v));
                    }
                }
                self.push(CheckResult::at_most(c.id(), r.value, tol));
            }
            CheckId::PdeSum => {
                let f = residual_field(EquationId::FwdPde, drifts, rho, pot, params)?;
                let b = residual_field(EquationId::BwdPde, drifts, rho, pot, params)?;
                let n = residual_field(EquationId::Newton, drifts, rho, pot, params)?;
                let gap = zip2(&zip2(&f, &b, |a, b| a + b), &n, |s, n| s - 2.0 * n);
                let r = aggregate("pde_sum", &gap, drifts, rho, tol);
                self.push(CheckResult::at_most(c.id(), r.value, tol));
            }
            CheckId::Convergence => self.convergence(tol)?,
            CheckId::RelativeEntropyAgreement => {
                let (t_pm, t_mp) = relative_entropy_theorem1(drifts, rho, params)?;
                let (c_pm, c_mp) = relative_entropy_corollary1(drifts, rho)?;
                self.push(CheckResult::at_most("relative_entropy_agreement.plus", (t_pm - c_pm).abs(), tol));
                self.push(CheckResult::at_most("relative_entropy_agreement.minus", (t_mp - c_mp).abs(), tol));
            }
            CheckId::RelativeEntropyZero => {
                let (t_pm, t_mp) = relative_entropy_theorem1(drifts, rho, params)?;
                let (c_pm, c_mp) = relative_entropy_corollary1(drifts, rho)?;
                let worst = [t_pm, t_mp, c_pm, c_mp].iter().fold(0.0_f64, |a, b| a.max(b.abs()));
                self.push(CheckResult::at_most(c.id(), worst, tol));
            }
            CheckId::RelativeEntropyAntisymmetry => {
                let (t_pm, t_mp) = relative_entropy_theorem1(drifts, rho, params)?;
                let (c_pm, c_mp) = relative_entropy_corollary1(drifts, rho)?;
                let worst = (t_pm + t_mp).abs().max((c_pm + c_mp).abs());
                self.push(CheckResult::at_most(c.id(), worst, tol));
            }
            CheckId::FisherAgreement => {
                let fp = fisher_production(drifts, rho, params)?;
                self.push(CheckResult::at_most(c.id(), fp.max_disagreement(), tol));
            }
            CheckId::FisherGroundValue => {
                let fp = fisher_production(drifts, rho, params)?;
                let omega = match params.potential() {
                    Potential::Harmonic { omega } | Potential::Coherent { omega, .. } => omega,
                    _ => return Err(Error::InvalidInput("ground-state Fisher value needs a harmonic potential".into())),
                };
                let expected = omega * tg.duration();
                self.push(CheckResult::at_most(c.id(), (fp.direct - expected).abs(), tol).with_note(format!("expected {expected}")));
            }
            CheckId::Bohm => {
                let b = bohm_identity(rho, params);
                self.push(CheckResult::at_most(c.id(), b.max_gap(), tol));
            }
            CheckId::ChainReversal | CheckId::ChainDecomposition | CheckId::ChainNonnegativity => {
                let s = chain_statistics(self.cfg.seed.unwrap_or(0), CHAIN_TRIALS)?;
                let r = match c {
                    CheckId::ChainReversal => CheckResult::at_most(c.id(), s.reversal_kl, tol),
                    CheckId::ChainDecomposition => CheckResult::at_most(c.id(), s.decomposition_gap, tol),
                    _ => CheckResult::at_least(c.id(), s.min_kl, -tol),
                };
                self.push(r.with_note(format!("{CHAIN_TRIALS} chains")));
            }
            CheckId::BornForward | CheckId::BornBackward => {
                let ens = self.ensembles()?;
                let e = if c == CheckId::BornForward { &ens.forward } else { &ens.backward };
                let n = e.tgrid().n_nodes();
                let all: Vec<usize> = (0..n).collect();
                let r = born_check(&sol.history, e, &all, tol)?;
                for (j, v) in r.per_node.iter().enumerate() {
                    if let Some(v) = v {
                        self.plot.push(PlotRow::series(&format!("{}.ks", c.id()), e.tgrid().t(j), *v));
                    }
                }
                let picked = [0, (n - 1) / 2, n - 1];
                let worst = picked.iter().filter_map(|&j| r.per_node[j]).fold(0.0, f64::max);
                let note = format!("t = {:?}; {} paths, {} escaped", picked.map(|j| e.tgrid().t(j)), e.n_paths(), e.n_escaped());
                self.push(CheckResult::at_most(c.id(), worst, tol).with_note(note));
            }
            CheckId::LagrangianIdentities => {
                let rep = expectation_identities(drifts, rho, pot, params)?;
                for name in LAGRANGIAN_IDENTITIES {
                    let row = rep.row(name).expect("identity row");
                    self.push(CheckResult::at_most(format!("lagrangian.{name}"), row.max_gap(), tol));
                }
                for name in ["E_plus_corrected", "E_minus_corrected"] {
                    let row = rep.row(name).expect("identity row");
                    self.push(
                        CheckResult::at_most(format!("lagrangian.{name}"), row.max_gap(), tol)
                            .diagnostic()
                            .with_note("E[L_E±] = E[L_Y ∓ m v u]"),
                    );
                }
            }
            CheckId::GSymmetry => {
                let rep = expectation_identities(drifts, rho, pot, params)?;
                let row = rep.row("G_plus_vs_minus").expect("identity row");
                self.push(CheckResult::at_most(c.id(), row.max_gap(), tol));
            }
            CheckId::FunctionalOffset => {
                let hbar = params.hbar();
                let (ha, hb) = crate::info::boundary_entropies(rho);
                for (dir, s) in [(Sign::Plus, 1.0), (Sign::Minus, -1.0)] {
                    let j_g = augmented_functional(LagrangianKind::new(Family::G, dir), drifts, rho, pot, params)?;
                    let j_y = augmented_functional(LagrangianKind::new(Family::Y, dir), drifts, rho, pot, params)?;
                    let diff = j_g.total - j_y.total;
                    let suffix = if dir == Sign::Plus { "plus" } else { "minus" };
                    let stated = -s * 0.5 * hbar * (hb - ha);
                    self.push(
                        CheckResult::at_most(format!("functional_offset.{suffix}"), (diff - stated).abs(), tol)
                            .with_note(format!("offset {diff:.6e}, H_b - H_a = {:.6e}", hb - ha)),
                    );
                    self.push(
                        CheckResult::at_most(format!("functional_offset.{suffix}_opposite_sign"), (diff + stated).abs(), tol)
                            .diagnostic(),
                    );
                }
            }
            CheckId::WeakFormPlus | CheckId::WeakFormMinus => {
                let dir = if c == CheckId::WeakFormPlus { Sign::Plus } else { Sign::Minus };
                let family = PerturbationProcess::sine_family(tg);
                let w = first_variation_weak(dir, drifts, rho, pot, params, &family)?;
                let pass = w.passes(tol);
                let mut r = CheckResult::at_most(c.id(), w.worst_relative(), tol)
                    .with_note(format!("{} perturbations, value is max |pairing| / ||z||", family.len()));
                r.pass = pass;
                self.push(r);
            }
            CheckId::PathVariation => {
                let ens = self.ensembles()?;
                let z = PerturbationProcess::sine(*ens.forward.tgrid(), 3);
                let a = path_variation_identity(&ens.forward, &z)?;
                self.push(CheckResult::at_most(c.id(), a.forward.max(a.backward), tol));
            }
            CheckId::ExpectationSwap => {
                let ens = &self.ensembles()?.forward;
                let f = |_j: usize, x: f64| x * x;
                let per_path = path_time_integrals(ens, f);
                let lhs = per_path.iter().sum::<f64>() / per_path.len() as f64;
                let means: Vec<f64> = ensemble_expectation(ens, f).iter().map(|e| e.mean).collect();
                let rhs = trapezoid(&means, ens.tgrid().dt());
                let scale = lhs.abs().max(1.0);
                self.push(CheckResult::at_most(c.id(), (lhs - rhs).abs() / scale, tol));
            }
        }
        Ok(())
    }

    /// Residuals on the configured grids against a re-solve with `dx` and
    /// `dt` halved; the row value is the smallest reduction factor among
    /// residuals above the noise floor.
    fn convergence(&mut self, tol: f64) -> Result<()> {
        let cfg = self.cfg;
        let coarse = self.sol;
        let fine = solve_on(
            cfg.scenario,
            &cfg.params,
            cfg.grid.refined(),
            cfg.tgrid.refined(),
            cfg.density_floor,
            cfg.drift_shift,
        )?;
        let mut worst = f64::INFINITY;
        let mut counted = Vec::new();
        for eq in RESIDUAL_EQUATIONS {
            let a = pde_residual(eq, &coarse.drifts, &coarse.rho, &coarse.potential, &coarse.params, 1.0)?.value;
            let b = pde_residual(eq, &fine.drifts, &fine.rho, &fine.potential, &fine.params, 1.0)?.value;
            if a > CONVERGENCE_NOISE_FLOOR {
                let ratio = a / b;
                worst = worst.min(ratio);
                counted.push(eq.id());
                self.rows.push(CheckResult::at_least(format!("convergence.{}", eq.id()), ratio, tol));
            }
        }
        let note = if counted.is_empty() {
            format!("all residuals below {CONVERGENCE_NOISE_FLOOR:e}")
        } else {
            format!("{} residuals above {CONVERGENCE_NOISE_FLOOR:e}", counted.len())
        };
        let value = if counted.is_empty() { f64::INFINITY } else { worst };
        self.rows.push(CheckResult::at_least("convergence", value, tol).with_note(note));
        Ok(())
    }
}

fn oracle(scenario: Scenario, params: &PhysicsParams) -> Result<crate::scenario::GaussianOracle> {
    scenario
        .oracle(params)
        .ok_or_else(|| Error::InvalidInput(format!("scenario {scenario} has no closed-form oracle")))
}

/// Density maximum refined by a parabola through `ln rho` at the three
/// nodes around the discrete argmax (exact for Gaussians).
pub fn peak_position(grid: &SpatialGrid, rho: &[f64]) -> f64 {
    let i = rho
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0;
    if i == 0 || i + 1 == rho.len() || rho[i - 1] <= 0.0 || rho[i + 1] <= 0.0 {
        return grid.x(i);
    }
    let (l, c, r) = (rho[i - 1].ln(), rho[i].ln(), rho[i + 1].ln());
    let curv = l - 2.0 * c + r;
    let shift = if curv < 0.0 { 0.5 * (l - r) / curv } else { 0.0 };
    grid.x(i) + shift * grid.dx()
}

/// Worst-case statistics over randomized finite chains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainStatistics {
    /// Largest `|KL|` between the chain and its Bayes reversal.
    pub reversal_kl: f64,
    /// Largest `|KL - (T1 + T2)|`, Bayes-reversed and mismatched pairs alike.
    pub decomposition_gap: f64,
    /// Smallest KL over mismatched pairs.
    pub min_kl: f64,
}

fn random_distribution(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    // bounded away from zero so every reversal is defined
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

fn random_kernels(rng: &mut ChaCha8Rng, n: usize, steps: usize) -> Vec<Vec<Vec<f64>>> {
    (0..steps).map(|_| (0..n).map(|_| random_distribution(rng, n)).collect()).collect()
}

/// `trials` random chains with 2–5 states and 1–4 steps, drawn from `seed`.
pub fn chain_statistics(seed: u64, trials: usize) -> Result<ChainStatistics> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = ChainStatistics { reversal_kl: 0.0, decomposition_gap: 0.0, min_kl: f64::INFINITY };
    for _ in 0..trials {
        let n = rng.random_range(2..=5);
        let steps = rng.random_range(1..=4);
        let chain = DiscreteChain::new(random_distribution(&mut rng, n), random_kernels(&mut rng, n, steps))?;
        let _ = bayes_reversal(&chain)?;
        let pair = chain_path_measures(&chain)?;
        let rep = chain_relative_entropy(&pair, &chain)?;
        s.reversal_kl = s.reversal_kl.max(rep.h_plus_minus.abs()).max(rep.h_minus_plus.abs());
        s.decomposition_gap = s.decomposition_gap.max(rep.breakdown_defect());

        let mismatched = path_measures_with_backward(&chain, random_kernels(&mut rng, n, steps))?;
        let rep = chain_relative_entropy(&mismatched, &chain)?;
        s.decomposition_gap = s.decomposition_gap.max(rep.breakdown_defect());
        s.min_kl = s.min_kl.min(rep.h_plus_minus).min(rep.h_minus_plus);
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    #[test]
    fn check_ids_round_trip() {
        for c in CheckId::all() {
            assert_eq!(c.id().parse::<CheckId>().unwrap(), c);
        }
        assert!("nope".parse::<CheckId>().is_err());
    }

    #[test]
    fn peak_is_exact_for_gaussians() {
        let g = SpatialGrid::new(-5.0, 5.0, 101).unwrap();
        let rho: Vec<f64> = g.points().iter().map(|x| (-(x - 0.123_f64).powi(2)).exp()).collect();
        assert!((peak_position(&g, &rho) - 0.123).abs() < 1e-12);
    }

    #[test]
    fn chain_statistics_are_at_round_off() {
        let s = chain_statistics(11, 32).unwrap();
        assert!(s.reversal_kl <= 1e-12, "{s:?}");
        assert!(s.decomposition_gap <= 1e-12, "{s:?}");
        assert!(s.min_kl > 0.0, "{s:?}");
    }

    #[test]
    fn solve_stage_needs_no_seed() {
        let cfg = parse_config("scenario = harmonic_ground\nchecks = norm_drift\ngrid.n_points = 129\ntime.n_steps = 100\n")
            .unwrap();
        let out = execute(&cfg, Stage::Verify).unwrap();
        assert!(out.ensembles.is_none());
        assert_eq!(out.checks.len(), 1);
        assert!(out.all_pass(), "{:?}", out.checks);
    }

    #[test]
    fn sample_stage_reports_missing_seed() {
        let cfg = parse_config("scenario = harmonic_ground\nchecks = norm_drift\n").unwrap();
        let err = execute(&cfg, Stage::Sample).unwrap_err();
        assert_eq!(err.stage, Stage::Sample);
    }
}
