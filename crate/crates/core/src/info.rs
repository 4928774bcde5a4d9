//! Entropies, path-space relative entropy, Fisher information and its
//! production, the Bohm-potential identity, and an exact finite-state chain
//! oracle for the path-measure decomposition.

use crate::error::{Error, Result};
use crate::fields::{gradient, laplacian, trapezoid, PhysicsParams, ScalarField, TimeGrid};
use crate::history::{ddt_series, grad_series, lap_series, zip2, DensityHistory};
use crate::schrodinger::{DriftHistory, DEFAULT_DENSITY_FLOOR};

/// Largest number of path tuples the chain oracle enumerates.
pub const MAX_ENUMERATED_PATHS: usize = 1_000_000;
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// `-\int rho ln rho dx` over `rho >= DEFAULT_DENSITY_FLOOR`.
pub fn differential_entropy(rho: &ScalarField) -> f64 {
    differential_entropy_with_floor(rho, DEFAULT_DENSITY_FLOOR)
}

pub fn differential_entropy_with_floor(rho: &ScalarField, floor: f64) -> f64 {
    let h: Vec<f64> = rho.values().iter().map(|&p| if p >= floor { -p * p.ln() } else { 0.0 }).collect();
    trapezoid(&h, rho.grid().dx())
}

/// `I = \int rho (grad ln rho)^2 dx` over `rho >= DEFAULT_DENSITY_FLOOR`.
pub fn fisher_information(rho: &ScalarField) -> f64 {
    fisher_information_with_floor(rho, DEFAULT_DENSITY_FLOOR)
}

pub fn fisher_information_with_floor(rho: &ScalarField, floor: f64) -> f64 {
    let ln: Vec<f64> = rho.values().iter().map(|p| p.max(floor).ln()).collect();
    let g = gradient(&ln, rho.grid().dx());
    let f: Vec<f64> =
        rho.values().iter().zip(&g).map(|(&p, &d)| if p >= floor { p * d * d } else { 0.0 }).collect();
    trapezoid(&f, rho.grid().dx())
}

fn check_inputs(drifts: &DriftHistory, rho: &DensityHistory) -> Result<()> {
    if drifts.grid() != rho.grid() || drifts.tgrid() != rho.tgrid() {
        return Err(Error::InvalidInput("drifts and density come from different grids".into()));
    }
    if rho.tgrid().n_nodes() < 3 {
        return Err(Error::InvalidInput("information measures need at least three time nodes".into()));
    }
    Ok(())
}

fn entropy_at(rho: &DensityHistory, k: usize) -> f64 {
    differential_entropy_with_floor(&rho.field(k), rho.floor())
}

fn time_integral(series: &[f64], tgrid: &TimeGrid) -> f64 {
    trapezoid(series, tgrid.dt())
}

/// `(H_a, H_b)` at the first and last node.
pub fn boundary_entropies(rho: &DensityHistory) -> (f64, f64) {
    (entropy_at(rho, 0), entropy_at(rho, rho.tgrid().n_nodes() - 1))
}

/// `E[D+ ln rho]` and `E[D- ln rho]` per node, from the operator form
/// `D± = d/dt + b± grad ± nu lap`.
pub fn log_density_derivatives(drifts: &DriftHistory, rho: &DensityHistory, params: &PhysicsParams) -> Result<(Vec<f64>, Vec<f64>)> {
    check_inputs(drifts, rho)?;
    let dx = rho.grid().dx();
    let nu = params.nu();
    let dt = ddt_series(rho.ln_rho(), rho.tgrid().dt());
    let g = grad_series(rho.ln_rho(), dx);
    let l = lap_series(rho.ln_rho(), dx);
    let n = dt.len();
    let mut plus = Vec::with_capacity(n);
    let mut minus = Vec::with_capacity(n);
    for k in 0..n {
        let dp: Vec<f64> = (0..dt[k].len()).map(|i| dt[k][i] + drifts.b_plus()[k][i] * g[k][i] + nu * l[k][i]).collect();
        let dm: Vec<f64> = (0..dt[k].len()).map(|i| dt[k][i] + drifts.b_minus()[k][i] * g[k][i] - nu * l[k][i]).collect();
        plus.push(rho.expect_at(k, &dp, &rho.mask()[k]));
        minus.push(rho.expect_at(k, &dm, &rho.mask()[k]));
    }
    Ok((plus, minus))
}

/// `H(rho+||rho-) = H_b - H_a + \int E[D+ ln rho] dt` and
/// `H(rho-||rho+) = H_a - H_b - \int E[D- ln rho] dt`.
pub fn relative_entropy_theorem1(drifts: &DriftHistory, rho: &DensityHistory, params: &PhysicsParams) -> Result<(f64, f64)> {
    let (plus, minus) = log_density_derivatives(drifts, rho, params)?;
    let (ha, hb) = boundary_entropies(rho);
    let tg = rho.tgrid();
    Ok((hb - ha + time_integral(&plus, tg), ha - hb - time_integral(&minus, tg)))
}

/// `E[div(b+ + b-)]` per node.
fn drift_sum_divergence(drifts: &DriftHistory, rho: &DensityHistory) -> Vec<f64> {
    let s = zip2(drifts.b_plus(), drifts.b_minus(), |a, b| a + b);
    rho.expect(&grad_series(&s, rho.grid().dx()))
}

/// `H(rho±||rho∓) = ±(H_b - H_a) ∓ (1/2) \int E[div(b+ + b-)] dt`.
pub fn relative_entropy_corollary1(drifts: &DriftHistory, rho: &DensityHistory) -> Result<(f64, f64)> {
    check_inputs(drifts, rho)?;
    let (ha, hb) = boundary_entropies(rho);
    let div = 0.5 * time_integral(&drift_sum_divergence(drifts, rho), rho.tgrid());
    Ok((hb - ha - div, ha - hb + div))
}

/// The three expressions of the Fisher information production.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FisherProduction {
    /// `\int nu I dt`.
    pub direct: f64,
    /// `H_b - H_a - \int E[div b+] dt`.
    pub plus: f64,
    /// `H_a - H_b + \int E[div b-] dt`.
    pub minus: f64,
}

impl FisherProduction {
    pub fn max_disagreement(&self) -> f64 {
        (self.direct - self.plus).abs().max((self.direct - self.minus).abs()).max((self.plus - self.minus).abs())
    }
}

/// `I(t) = E[(grad ln rho)^2]` per node.
pub fn fisher_series(rho: &DensityHistory) -> Vec<f64> {
    let g = grad_series(rho.ln_rho(), rho.grid().dx());
    rho.expect(&zip2(&g, &g, |a, b| a * b))
}

pub fn fisher_production(drifts: &DriftHistory, rho: &DensityHistory, params: &PhysicsParams) -> Result<FisherProduction> {
    check_inputs(drifts, rho)?;
    let tg = rho.tgrid();
    let dx = rho.grid().dx();
    let (ha, hb) = boundary_entropies(rho);
    let nu_i: Vec<f64> = fisher_series(rho).iter().map(|i| params.nu() * i).collect();
    let div_plus = rho.expect(&grad_series(drifts.b_plus(), dx));
    let div_minus = rho.expect(&grad_series(drifts.b_minus(), dx));
    Ok(FisherProduction {
        direct: time_integral(&nu_i, tg),
        plus: hb - ha - time_integral(&div_plus, tg),
        minus: ha - hb + time_integral(&div_minus, tg),
    })
}

/// Per-node `E[Q]` and `hbar^2 I / 8m`, with `Q = -hbar^2 lap sqrt(rho) / (2m sqrt(rho))`.
#[derive(Debug, Clone, PartialEq)]
pub struct BohmCheck {
    pub expected_q: Vec<f64>,
    pub fisher_form: Vec<f64>,
}

impl BohmCheck {
    pub fn max_gap(&self) -> f64 {
        self.expected_q.iter().zip(&self.fisher_form).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

pub fn bohm_identity(rho: &DensityHistory, params: &PhysicsParams) -> BohmCheck {
    let (m, hbar) = (params.mass(), params.hbar());
    let dx = rho.grid().dx();
    let fisher = fisher_series(rho);
    let expected_q = (0..rho.rho().len())
        .map(|k| {
            let sq: Vec<f64> = rho.rho()[k].iter().map(|p| p.sqrt()).collect();
            let lap = laplacian(&sq, dx);
            // rho Q = -hbar^2 sqrt(rho) lap sqrt(rho) / 2m, no division needed
            let f: Vec<f64> = sq
                .iter()
                .zip(&lap)
                .zip(&rho.mask()[k])
                .map(|((s, l), &ok)| if ok { -hbar * hbar * s * l / (2.0 * m) } else { 0.0 })
                .collect();
            trapezoid(&f, dx)
        })
        .collect();
    BohmCheck { expected_q, fisher_form: fisher.iter().map(|i| hbar * hbar * i / (8.0 * m)).collect() }
}

/// One named contribution to a headline entropy value.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyTerm {
    pub headline: &'static str,
    pub name: &'static str,
    pub value: f64,
    pub stderr: f64,
}

/// Relative entropies and Fisher production with a per-term breakdown;
/// the terms of each headline sum to it.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyReport {
    pub h_a: f64,
    pub h_b: f64,
    pub h_plus_minus: f64,
    pub h_minus_plus: f64,
    pub fisher_production_fwd: Option<f64>,
    pub fisher_production_bwd: Option<f64>,
    /// Set when some path has positive forward and zero backward probability.
    pub infinite: bool,
    pub terms: Vec<EntropyTerm>,
}

impl EntropyReport {
    pub fn headline(&self, name: &str) -> Option<f64> {
        match name {
            "h_plus_minus" => Some(self.h_plus_minus),
            "h_minus_plus" => Some(self.h_minus_plus),
            "fisher_production_fwd" => self.fisher_production_fwd,
            "fisher_production_bwd" => self.fisher_production_bwd,
            _ => None,
        }
    }

    /// Largest `|headline - sum of its terms|`.
    pub fn breakdown_defect(&self) -> f64 {
        let mut worst = 0.0_f64;
        for h in ["h_plus_minus", "h_minus_plus", "fisher_production_fwd", "fisher_production_bwd"] {
            let terms: Vec<f64> = self.terms.iter().filter(|t| t.headline == h).map(|t| t.value).collect();
            if let (Some(v), false) = (self.headline(h), terms.is_empty()) {
                worst = worst.max((v - terms.iter().sum::<f64>()).abs());
            }
        }
        worst
    }

    /// Key-value text with the term breakdown nested under each headline.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let opt = |v: Option<f64>| v.map_or("none".to_string(), |x| format!("{x:.12e}"));
        s.push_str(&format!("h_a = {:.12e}\nh_b = {:.12e}\n", self.h_a, self.h_b));
        s.push_str(&format!("h_plus_minus = {:.12e}\nh_minus_plus = {:.12e}\n", self.h_plus_minus, self.h_minus_plus));
        s.push_str(&format!("fisher_production_fwd = {}\n", opt(self.fisher_production_fwd)));
        s.push_str(&format!("fisher_production_bwd = {}\n", opt(self.fisher_production_bwd)));
        s.push_str(&format!("infinite = {}\n", self.infinite));
        for t in &self.terms {
            s.push_str(&format!("{}.{} = {:.12e} +- {:.3e}\n", t.headline, t.name, t.value, t.stderr));
        }
        s
    }
}

/// Continuum report: both relative entropies in the Theorem-1 form and both
/// Fisher production forms, with their constituent terms.
pub fn entropy_report(drifts: &DriftHistory, rho: &DensityHistory, params: &PhysicsParams) -> Result<EntropyReport> {
    let (plus, minus) = log_density_derivatives(drifts, rho, params)?;
    let (ha, hb) = boundary_entropies(rho);
    let tg = rho.tgrid();
    let dx = rho.grid().dx();
    let ip = time_integral(&plus, tg);
    let im = time_integral(&minus, tg);
    let div_plus = time_integral(&rho.expect(&grad_series(drifts.b_plus(), dx)), tg);
    let div_minus = time_integral(&rho.expect(&grad_series(drifts.b_minus(), dx)), tg);
    let term = |headline, name, value| EntropyTerm { headline, name, value, stderr: 0.0 };
    let terms = vec![
        term("h_plus_minus", "entropy_change", hb - ha),
        term("h_plus_minus", "integral_d_plus_log_rho", ip),
        term("h_minus_plus", "entropy_change", ha - hb),
        term("h_minus_plus", "integral_d_minus_log_rho", -im),
        term("fisher_production_fwd", "entropy_change", hb - ha),
        term("fisher_production_fwd", "integral_div_b_plus", -div_plus),
        term("fisher_production_bwd", "entropy_change", ha - hb),
        term("fisher_production_bwd", "integral_div_b_minus", div_minus),
    ];
    Ok(EntropyReport {
        h_a: ha,
        h_b: hb,
        h_plus_minus: (hb - ha) + ip,
        h_minus_plus: (ha - hb) + (-im),
        fisher_production_fwd: Some((hb - ha) + (-div_plus)),
        fisher_production_bwd: Some((ha - hb) + div_minus),
        infinite: false,
        terms,
    })
}

// ---------------------------------------------------------------------------
// finite-state chains

/// `-sum p ln p` with `0 ln 0 = 0`.
pub fn shannon_entropy(p: &[f64]) -> f64 {
    p.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.ln()).sum()
}

fn check_distribution(p: &[f64], what: &str) -> Result<()> {
    if p.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
        return Err(Error::InvalidInput(format!("{what} has a negative or non-finite entry")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > STOCHASTIC_TOL {
        return Err(Error::InvalidInput(format!("{what} sums to {s}, not 1")));
    }
    Ok(())
}

/// Initial law plus one row-stochastic kernel `p(x_{i+1} | x_i)` per step.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteChain {
    n_states: usize,
    rho1: Vec<f64>,
    kernels: Vec<Vec<Vec<f64>>>,
}

impl DiscreteChain {
    pub fn new(rho1: Vec<f64>, kernels: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let n = rho1.len();
        if n == 0 {
            return Err(Error::InvalidInput("chain needs at least one state".into()));
        }
        check_distribution(&rho1, "initial law")?;
        check_kernels(&kernels, n)?;
        Ok(Self { n_states: n, rho1, kernels })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_steps(&self) -> usize {
        self.kernels.len()
    }

    pub fn rho1(&self) -> &[f64] {
        &self.rho1
    }

    pub fn kernels(&self) -> &[Vec<Vec<f64>>] {
        &self.kernels
    }

    /// Marginals `rho_1 .. rho_{n_steps + 1}`.
    pub fn marginals(&self) -> Vec<Vec<f64>> {
        let mut out = vec![self.rho1.clone()];
        for k in &self.kernels {
            let prev = out.last().expect("non-empty");
            let next = (0..self.n_states).map(|y| (0..self.n_states).map(|x| prev[x] * k[x][y]).sum()).collect();
            out.push(next);
        }
        out
    }
}

fn check_kernels(kernels: &[Vec<Vec<f64>>], n: usize) -> Result<()> {
    for (s, k) in kernels.iter().enumerate() {
        if k.len() != n || k.iter().any(|row| row.len() != n) {
            return Err(Error::InvalidInput(format!("kernel {s} is not {n}x{n}")));
        }
        for (i, row) in k.iter().enumerate() {
            check_distribution(row, &format!("row {i} of kernel {s}"))?;
        }
    }
    Ok(())
}

/// Forward and backward path measures, enumerated over all path tuples
/// (first state most significant).
#[derive(Debug, Clone, PartialEq)]
pub struct PathMeasurePair {
    pub rho_plus: Vec<f64>,
    pub rho_minus: Vec<f64>,
    pub marginals: Vec<Vec<f64>>,
    /// `backward[i][y][x] = p-(x_i = x | x_{i+1} = y)`.
    pub backward_kernels: Vec<Vec<Vec<f64>>>,
}

fn enumeration_size(chain: &DiscreteChain) -> Result<usize> {
    let mut total: usize = 1;
    for _ in 0..=chain.n_steps() {
        total = total
            .checked_mul(chain.n_states)
            .filter(|&t| t <= MAX_ENUMERATED_PATHS)
            .ok_or_else(|| Error::InvalidInput(format!("more than {MAX_ENUMERATED_PATHS} path tuples to enumerate")))?;
    }
    Ok(total)
}

/// Decodes tuple index `idx` into states, first state most significant.
fn decode(mut idx: usize, n_states: usize, len: usize, out: &mut [usize]) {
    for slot in out[..len].iter_mut().rev() {
        *slot = idx % n_states;
        idx /= n_states;
    }
}

/// Bayes-reversed backward kernels `p-(x | y) = p(y | x) rho_i(x) / rho_{i+1}(y)`.
pub fn bayes_reversal(chain: &DiscreteChain) -> Result<Vec<Vec<Vec<f64>>>> {
    let marg = chain.marginals();
    let n = chain.n_states;
    let mut out = Vec::with_capacity(chain.n_steps());
    for (i, k) in chain.kernels.iter().enumerate() {
        let mut b = vec![vec![0.0; n]; n];
        for y in 0..n {
            let denom = marg[i + 1][y];
            if denom <= 0.0 {
                return Err(Error::DegenerateChain { step: i + 1, state: y });
            }
            for x in 0..n {
                b[y][x] = k[x][y] * marg[i][x] / denom;
            }
        }
        out.push(b);
    }
    Ok(out)
}

/// Forward measure from the chain, backward measure from the Bayes reversal.
pub fn chain_path_measures(chain: &DiscreteChain) -> Result<PathMeasurePair> {
    let backward = bayes_reversal(chain)?;
    path_measures_with_backward(chain, backward)
}

/// Forward measure from the chain; backward measure started from the chain's
/// final marginal and stepped with the given (arbitrary) backward kernels.
pub fn path_measures_with_backward(chain: &DiscreteChain, backward: Vec<Vec<Vec<f64>>>) -> Result<PathMeasurePair> {
    if backward.len() != chain.n_steps() {
        return Err(Error::InvalidInput("one backward kernel per step is required".into()));
    }
    check_kernels(&backward, chain.n_states)?;
    let total = enumeration_size(chain)?;
    let n = chain.n_states;
    let len = chain.n_steps() + 1;
    let marginals = chain.marginals();
    let last = &marginals[len - 1];
    let mut xs = vec![0usize; len];
    let mut rho_plus = Vec::with_capacity(total);
    let mut rho_minus = Vec::with_capacity(total);
    for idx in 0..total {
        decode(idx, n, len, &mut xs);
        let mut p = chain.rho1[xs[0]];
        for i in 0..len - 1 {
            p *= chain.kernels[i][xs[i]][xs[i + 1]];
        }
        let mut q = last[xs[len - 1]];
        for i in (0..len - 1).rev() {
            q *= backward[i][xs[i + 1]][xs[i]];
        }
        rho_plus.push(p);
        rho_minus.push(q);
    }
    Ok(PathMeasurePair { rho_plus, rho_minus, marginals, backward_kernels: backward })
}

/// `KL(p||q)`; the flag is set when `p > 0` meets `q = 0`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> (f64, bool) {
    let mut sum = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        if a > 0.0 {
            if b <= 0.0 {
                return (f64::INFINITY, true);
            }
            sum += a * (a / b).ln();
        }
    }
    (sum, false)
}

/// Exact KL in both orders plus the decomposition `KL(rho+||rho-) = T1 + T2`
/// with `T1 = H(rho_n) - H(rho_1)` and `T2 = E+[sum_i ln p(x_{i+1}|x_i) / p-(x_i|x_{i+1})]`.
///
/// Also reported: the marginal form `sum_i (E[ln rho_{i+1}] - E[ln rho_i])`,
/// which equals `T2` when the backward kernels are the Bayes reversal.
pub fn chain_relative_entropy(pair: &PathMeasurePair, chain: &DiscreteChain) -> Result<EntropyReport> {
    let n = chain.n_states;
    let len = chain.n_steps() + 1;
    if pair.rho_plus.len() != enumeration_size(chain)? || pair.rho_minus.len() != pair.rho_plus.len() {
        return Err(Error::InvalidInput("path measures do not match the chain".into()));
    }
    let (kl_pm, inf_pm) = kl_divergence(&pair.rho_plus, &pair.rho_minus);
    let (kl_mp, inf_mp) = kl_divergence(&pair.rho_minus, &pair.rho_plus);
    let h1 = shannon_entropy(&pair.marginals[0]);
    let hn = shannon_entropy(&pair.marginals[len - 1]);
    let t1 = hn - h1;

    let mut t2 = 0.0;
    let mut xs = vec![0usize; len];
    for (idx, &p) in pair.rho_plus.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        decode(idx, n, len, &mut xs);
        let mut s = 0.0;
        for i in 0..len - 1 {
            s += (chain.kernels[i][xs[i]][xs[i + 1]] / pair.backward_kernels[i][xs[i + 1]][xs[i]]).ln();
        }
        t2 += p * s;
    }
    let marginal_form: f64 = (0..len - 1).map(|i| shannon_entropy(&pair.marginals[i]) - shannon_entropy(&pair.marginals[i + 1])).sum();

    let infinite = inf_pm || inf_mp;
    let term = |headline, name, value| EntropyTerm { headline, name, value, stderr: 0.0 };
    let mut terms = vec![term("h_plus_minus", "t1", t1), term("h_plus_minus", "t2", t2)];
    terms.push(term("diagnostic", "t2_marginal_form", marginal_form));
    Ok(EntropyReport {
        h_a: h1,
        h_b: hn,
        h_plus_minus: if inf_pm { f64::INFINITY } else { kl_pm },
        h_minus_plus: if inf_mp { f64::INFINITY } else { kl_mp },
        fisher_production_fwd: None,
        fisher_production_bwd: None,
        infinite,
        terms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{SpatialGrid, Unit};
    use crate::scenario::Scenario;
    use crate::schrodinger::{decompose, extract_drifts, propagate};
    use proptest::prelude::*;
    use std::f64::consts::{E, PI};

    fn gauss(grid: SpatialGrid, mean: f64, var: f64) -> ScalarField {
        ScalarField::from_fn(grid, Unit::Density, |x| (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt())
            .unwrap()
    }

    fn run(s: Scenario) -> (DriftHistory, DensityHistory, PhysicsParams) {
        let params = s.default_params();
        let grid = s.default_grid();
        let h = propagate(&s.initial_state(&params, &grid).unwrap(), &params, &grid, &s.default_time_grid()).unwrap();
        let d = extract_drifts(&decompose(&h, DEFAULT_DENSITY_FLOOR).unwrap(), &params).unwrap();
        (d, DensityHistory::from_wavefunction(&h, DEFAULT_DENSITY_FLOOR).unwrap(), params)
    }

    #[test]
    fn gaussian_entropies() {
        let g = SpatialGrid::new(-8.0, 8.0, 513).unwrap();
        assert!((differential_entropy(&gauss(g, 0.0, 0.5)) - 0.5 * (PI * E).ln()).abs() < 1e-6);
        assert!((differential_entropy(&gauss(g, 0.0, 1.0)) - 0.5 * (2.0 * PI * E).ln()).abs() < 1e-4);
        let unit = SpatialGrid::new(0.0, 1.0, 101).unwrap();
        let box_ = ScalarField::constant(unit, 1.0, Unit::Density).unwrap();
        assert!(differential_entropy(&box_).abs() < 1e-12);
    }

    #[test]
    fn gaussian_fisher_information() {
        let g = SpatialGrid::new(-8.0, 8.0, 513).unwrap();
        assert!((fisher_information(&gauss(g, 0.0, 0.5)) - 2.0).abs() < 1e-5);
        assert!((fisher_information(&gauss(g, 0.0, 1.0)) - 1.0).abs() < 1e-5);
        // shift by a whole number of cells
        let c = 8.0 * g.dx();
        let a = fisher_information(&gauss(g, 0.0, 0.7));
        let b = fisher_information(&gauss(g, c, 0.7));
        assert!((a - b).abs() < 1e-10, "{}", a - b);
    }

    #[test]
    fn ground_state_information_measures() {
        let (d, rho, p) = run(Scenario::HarmonicGround);
        let (hp, hm) = relative_entropy_theorem1(&d, &rho, &p).unwrap();
        assert!(hp.abs() < 1e-6 && hm.abs() < 1e-6, "{hp} {hm}");
        let (cp, cm) = relative_entropy_corollary1(&d, &rho).unwrap();
        assert!(cp.abs() < 1e-9 && cm.abs() < 1e-9, "{cp} {cm}");
        let f = fisher_production(&d, &rho, &p).unwrap();
        for v in [f.direct, f.plus, f.minus] {
            assert!((v - 1.0).abs() < 1e-4, "{f:?}");
        }
        assert!(bohm_identity(&rho, &p).max_gap() < 1e-4);
    }

    #[test]
    fn free_packet_relative_entropy_vanishes() {
        let (d, rho, p) = run(Scenario::FreePacket);
        let (ha, hb) = boundary_entropies(&rho);
        assert!((hb - ha - 0.5 * 2.0_f64.ln()).abs() < 1e-4);
        let (cp, cm) = relative_entropy_corollary1(&d, &rho).unwrap();
        let (tp, tm) = relative_entropy_theorem1(&d, &rho, &p).unwrap();
        for v in [cp, cm, tp, tm] {
            assert!(v.abs() < 5e-4, "{v}");
        }
        assert!((tp + tm).abs() < 2e-4);
        let r = entropy_report(&d, &rho, &p).unwrap();
        assert!(r.breakdown_defect() <= 1e-12);
        assert_eq!(r.h_plus_minus, tp);
        assert!(r.to_text().contains("h_plus_minus.entropy_change = "));
    }

    #[test]
    fn symmetric_chain_is_reversible() {
        let k = vec![vec![0.9, 0.1], vec![0.1, 0.9]];
        let c = DiscreteChain::new(vec![0.5, 0.5], vec![k]).unwrap();
        let pair = chain_path_measures(&c).unwrap();
        for (a, b) in pair.rho_plus.iter().zip(&pair.rho_minus) {
            assert!((a - b).abs() <= 1e-15);
        }
        let r = chain_relative_entropy(&pair, &c).unwrap();
        assert_eq!(r.terms[0].value, 0.0);
        assert!(r.terms[1].value.abs() <= 1e-15);
    }

    #[test]
    fn biased_chain_decomposition() {
        let k = vec![vec![0.9, 0.1], vec![0.1, 0.9]];
        // one transition: H(rho_2) = H(0.66, 0.34)
        let c1 = DiscreteChain::new(vec![0.7, 0.3], vec![k.clone()]).unwrap();
        let r1 = chain_relative_entropy(&chain_path_measures(&c1).unwrap(), &c1).unwrap();
        let t1 = shannon_entropy(&[0.66, 0.34]) - shannon_entropy(&[0.7, 0.3]);
        assert!((r1.terms[0].value - t1).abs() < 1e-15);
        assert!((t1 - (0.64103 - 0.61086)).abs() < 1e-5);
        // two transitions: rho_3 = (0.628, 0.372)
        let c2 = DiscreteChain::new(vec![0.7, 0.3], vec![k.clone(), k]).unwrap();
        let pair = chain_path_measures(&c2).unwrap();
        for (a, b) in pair.rho_plus.iter().zip(&pair.rho_minus) {
            assert!((a - b).abs() <= 1e-14);
        }
        let r2 = chain_relative_entropy(&pair, &c2).unwrap();
        let t1 = shannon_entropy(&[0.628, 0.372]) - shannon_entropy(&[0.7, 0.3]);
        assert!((r2.terms[0].value - t1).abs() < 1e-14);
        assert!((r2.terms[1].value + t1).abs() < 1e-14);
        assert!(r2.h_plus_minus.abs() < 1e-14 && r2.h_minus_plus.abs() < 1e-14);
    }

    #[test]
    fn degenerate_marginal_is_an_error() {
        let k = vec![vec![1.0, 0.0], vec![1.0, 0.0]];
        let c = DiscreteChain::new(vec![0.5, 0.5], vec![k]).unwrap();
        assert_eq!(chain_path_measures(&c), Err(Error::DegenerateChain { step: 1, state: 1 }));
    }

    #[test]
    fn zero_backward_probability_is_flagged() {
        let k = vec![vec![0.5, 0.5], vec![0.5, 0.5]];
        let c = DiscreteChain::new(vec![0.5, 0.5], vec![k]).unwrap();
        let pair = path_measures_with_backward(&c, vec![vec![vec![1.0, 0.0], vec![1.0, 0.0]]]).unwrap();
        let r = chain_relative_entropy(&pair, &c).unwrap();
        assert!(r.infinite && r.h_plus_minus.is_infinite());
    }

    #[test]
    fn oversized_enumeration_is_rejected() {
        let n = 10;
        let k = vec![vec![0.1; n]; n];
        let c = DiscreteChain::new(vec![0.1; n], vec![k; 6]).unwrap();
        assert!(chain_path_measures(&c).is_err());
    }

    fn stochastic(raw: &[f64]) -> Vec<f64> {
        let s: f64 = raw.iter().sum();
        raw.iter().map(|x| x / s).collect()
    }

    fn chain_strategy() -> impl Strategy<Value = (DiscreteChain, Vec<Vec<Vec<f64>>>)> {
        (2usize..=4, 1usize..=3).prop_flat_map(|(n, steps)| {
            let row = proptest::collection::vec(0.05f64..1.0, n);
            let mat = proptest::collection::vec(row.clone(), n);
            (
                row,
                proptest::collection::vec(mat.clone(), steps),
                proptest::collection::vec(mat, steps),
            )
                .prop_map(|(r, ks, bs)| {
                    let norm = |ms: Vec<Vec<Vec<f64>>>| -> Vec<Vec<Vec<f64>>> {
                        ms.into_iter().map(|m| m.iter().map(|row| stochastic(row)).collect()).collect()
                    };
                    (DiscreteChain::new(stochastic(&r), norm(ks)).unwrap(), norm(bs))
                })
        })
    }

    proptest! {
        #[test]
        fn measures_sum_to_one_and_kl_decomposes((chain, other) in chain_strategy()) {
            let pair = chain_path_measures(&chain).unwrap();
            prop_assert!((pair.rho_plus.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!((pair.rho_minus.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            let r = chain_relative_entropy(&pair, &chain).unwrap();
            prop_assert!(r.h_plus_minus.abs() <= 1e-12);
            prop_assert!((r.terms[1].value - r.terms[2].value).abs() <= 1e-12);

            let mismatched = path_measures_with_backward(&chain, other).unwrap();
            let r = chain_relative_entropy(&mismatched, &chain).unwrap();
            prop_assert!(r.h_plus_minus >= -1e-12);
            prop_assert!(r.h_minus_plus >= -1e-12);
            prop_assert!((r.h_plus_minus - r.terms[0].value - r.terms[1].value).abs() <= 1e-12);
        }
    }
}
