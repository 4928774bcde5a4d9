//! Acceptance suite: twelve criteria, one PASS/FAIL line each.
//!
//! Run with `cargo test -p stochmech-core --test acceptance`. The binary exits
//! nonzero when any criterion fails. Expected values are computed here from
//! closed forms or by brute force, independently of the library's oracles,
//! and compared with what the pipeline reports.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stochmech_core::fields::trapezoid;
use stochmech_core::info::{chain_path_measures, chain_relative_entropy, path_measures_with_backward, DiscreteChain};
use stochmech_core::pipeline::{chain_statistics, execute, Stage, CONVERGENCE_NOISE_FLOOR};
use stochmech_core::{parse_config, RunOutcome, Scenario};

const SEED: u64 = 20_261_017;

// criterion 1
const STATIONARITY_TOL: f64 = 1e-6;
const SPREADING_TOL: f64 = 1e-4;
const PEAK_TOL: f64 = 1e-4;
// criterion 2
const OSMOTIC_GROUND_TOL: f64 = 2e-6;
const OSMOTIC_TOL: f64 = 1e-4;
// criteria 3–5
const RESIDUAL_TOL: f64 = 5e-4;
const CONVERGENCE_MIN: f64 = 3.0;
const PDE_SUM_TOL: f64 = 1e-12;
// criterion 6
const ENTROPY_AGREEMENT_TOL: f64 = 2e-4;
const ENTROPY_ZERO_TOL: f64 = 5e-4;
const ANTISYMMETRY_TOL: f64 = 2e-4;
// criterion 7
const CHAIN_COUNT: usize = 128;
const CHAIN_TOL: f64 = 1e-12;
// criterion 8
const FISHER_AGREEMENT_TOL: f64 = 5e-4;
const FISHER_GROUND_TOL: f64 = 1e-4;
const BOHM_TOL: f64 = 1e-4;
// criterion 9
const KS_FORWARD_TOL: f64 = 0.02;
const KS_BACKWARD_TOL: f64 = 0.03;
const BORN_PATHS: usize = 100_000;
// criterion 10
const IDENTITY_TOL: f64 = 1e-4;
const G_SYMMETRY_TOL: f64 = 1e-6;
const OFFSET_TOL: f64 = 5e-4;
// criterion 11
const WEAK_FORM_TOL: f64 = 5e-4;
const FAULT_FACTOR: f64 = 10.0;
/// Added to both drifts; about a tenth of the bulk drift magnitude.
const FAULT_SHIFT: f64 = 0.1;

struct Item {
    label: String,
    value: f64,
    bound: &'static str,
    tol: f64,
    pass: bool,
}

#[derive(Default)]
struct Verdict {
    items: Vec<Item>,
}

impl Verdict {
    fn at_most(&mut self, label: impl Into<String>, value: f64, tol: f64) {
        self.items.push(Item { label: label.into(), value, bound: "<=", tol, pass: value <= tol });
    }

    fn at_least(&mut self, label: impl Into<String>, value: f64, tol: f64) {
        self.items.push(Item { label: label.into(), value, bound: ">=", tol, pass: value >= tol });
    }

    fn flag(&mut self, label: impl Into<String>, ok: bool) {
        self.items.push(Item { label: label.into(), value: ok as u8 as f64, bound: ">=", tol: 1.0, pass: ok });
    }

    fn pass(&self) -> bool {
        !self.items.is_empty() && self.items.iter().all(|i| i.pass)
    }
}

struct Runs {
    by_scenario: BTreeMap<&'static str, RunOutcome>,
}

impl Runs {
    fn get(&self, s: Scenario) -> &RunOutcome {
        &self.by_scenario[s.id()]
    }

    /// Value of a gating or diagnostic row; a missing row is NaN (fails).
    fn value(&self, s: Scenario, id: &str) -> f64 {
        self.get(s).check(id).map_or(f64::NAN, |c| c.value)
    }
}

fn full_config(s: Scenario, extra: &str) -> stochmech_core::RunConfig {
    parse_config(&format!("scenario = {}\nseed = {SEED}\nsampler.n_paths = {BORN_PATHS}\n{extra}", s.id())).unwrap()
}

fn run_full(s: Scenario) -> RunOutcome {
    let t = Instant::now();
    let out = execute(&full_config(s, ""), Stage::Verify).unwrap_or_else(|e| panic!("{}: {e}", s.id()));
    eprintln!("  ran {} in {:.1} s", s.id(), t.elapsed().as_secs_f64());
    out
}

fn moments(xs: &[f64], rho: &[f64], dx: f64) -> (f64, f64) {
    let m1 = trapezoid(&xs.iter().zip(rho).map(|(x, p)| x * p).collect::<Vec<_>>(), dx);
    let m2 = trapezoid(&xs.iter().zip(rho).map(|(x, p)| x * x * p).collect::<Vec<_>>(), dx);
    (m1, m2 - m1 * m1)
}

fn criterion_1(r: &Runs) -> Verdict {
    let mut v = Verdict::default();
    // stationarity: max density drift against the initial slice
    let g = r.get(Scenario::HarmonicGround);
    let rho = g.solution.rho.rho();
    let drift = rho.iter().flat_map(|row| row.iter().zip(&rho[0]).map(|(a, b)| (a - b).abs())).fold(0.0, f64::max);
    v.at_most("harmonic_ground max |rho(t) - rho(0)|", drift, STATIONARITY_TOL);
    // the stationary density itself is pi^{-1/2} e^{-x^2}
    let xs = g.solution.rho.grid().points();
    let last = rho.len() - 1;
    let gap = xs.iter().zip(&rho[last]).map(|(x, p)| (p - (-x * x).exp() / PI.sqrt()).abs()).fold(0.0, f64::max);
    v.at_most("harmonic_ground rho(T) vs pi^-1/2 exp(-x^2)", gap, STATIONARITY_TOL);

    // free packet: variance 1/2 (1 + t^2) with m = hbar = 1
    let f = r.get(Scenario::FreePacket);
    let (grid, tg) = (f.solution.rho.grid(), f.solution.rho.tgrid());
    let xs = grid.points();
    let worst = f
        .solution
        .rho
        .rho()
        .iter()
        .enumerate()
        .map(|(k, row)| (moments(&xs, row, grid.dx()).1 - 0.5 * (1.0 + tg.t(k).powi(2))).abs())
        .fold(0.0, f64::max);
    v.at_most("free_packet variance vs (1 + t^2)/2", worst, SPREADING_TOL);

    // coherent: peak at x0 cos t, x0 = 1
    let c = r.get(Scenario::Coherent);
    let (grid, tg) = (c.solution.rho.grid(), c.solution.rho.tgrid());
    let worst = c
        .solution
        .rho
        .rho()
        .iter()
        .enumerate()
        .map(|(k, row)| (stochmech_core::pipeline::peak_position(grid, row) - tg.t(k).cos()).abs())
        .fold(0.0, f64::max);
    v.at_most("coherent peak vs cos t", worst, PEAK_TOL);
    // the coherent mean, which needs no interpolation, must agree as well
    let xs = grid.points();
    let worst = c
        .solution
        .rho
        .rho()
        .iter()
        .enumerate()
        .map(|(k, row)| (moments(&xs, row, grid.dx()).0 - tg.t(k).cos()).abs())
        .fold(0.0, f64::max);
    v.at_most("coherent mean vs cos t", worst, PEAK_TOL);
    for s in Scenario::ANALYTIC {
        v.at_most(format!("{} pipeline norm_drift", s.id()), r.value(s, "norm_drift"), 1e-8);
    }
    v.at_most("pipeline stationarity", r.value(Scenario::HarmonicGround, "stationarity"), STATIONARITY_TOL);
    v.at_most("pipeline spreading", r.value(Scenario::FreePacket, "spreading"), SPREADING_TOL);
    v.at_most("pipeline peak_trajectory", r.value(Scenario::Coherent, "peak_trajectory"), PEAK_TOL);
    v
}

fn criterion_2(r: &Runs) -> Verdict {
    let mut v = Verdict::default();
    v.at_most("harmonic_ground osmotic", r.value(Scenario::HarmonicGround, "osmotic"), OSMOTIC_GROUND_TOL);
    v.at_most("coherent osmotic", r.value(Scenario::Coherent, "osmotic"), OSMOTIC_TOL);
    v.at_most("free_packet osmotic", r.value(Scenario::FreePacket, "osmotic"), OSMOTIC_TOL);
    // the closed form u = -(x - x0 cos t) for the coherent state, max over the bulk
    let c = r.get(Scenario::Coherent);
    let d = &c.solution.drifts;
    let (grid, tg) = (d.grid(), d.tgrid());
    let mut worst = 0.0_f64;
    for k in 0..tg.n_nodes() {
        for i in 0..grid.len() {
            let x = grid.x(i);
            if (x - tg.t(k).cos()).abs() < 4.0 {
                worst = worst.max((d.u()[k][i] + (x - tg.t(k).cos())).abs());
            }
        }
    }
    v.at_most("coherent u vs -(x - cos t) for |x - cos t| < 4", worst, OSMOTIC_TOL);
    v
}

/// Residual rows plus their convergence rows; residuals already at round-off
/// have no convergence row and are listed as such.
fn residual_block(v: &mut Verdict, r: &Runs, ids: &[&str], converge: bool) {
    for s in Scenario::ANALYTIC {
        for id in ids {
            let value = r.value(s, id);
            v.at_most(format!("{} {id}", s.id()), value, RESIDUAL_TOL);
            if converge {
                let row = format!("convergence.{id}");
                if value > CONVERGENCE_NOISE_FLOOR {
                    v.at_least(format!("{} {id} reduction", s.id()), r.value(s, &row), CONVERGENCE_MIN);
                } else {
                    v.flag(format!("{} {id} at round-off (no convergence row)", s.id()), r.get(s).check(&row).is_none());
                }
            }
        }
    }
}

fn criterion_3(r: &Runs) -> Verdict {
    let mut v = Verdict::default();
    residual_block(&mut v, r, &["continuity", "nelson1", "nelson2", "newton", "fwd_dyn", "bwd_dyn"], true);
    v
}

fn criterion_4(r: &Runs) -> Verdict {
    let mut v = Verdict::default();
    residual_block(&mut v, r, &["fwd_pde", "bwd_pde"], false);
    for s in Scenario::ANALYTIC {
        v.at_most(format!("{} (fwd + bwd) - 2 newton", s.id()), r.value(s, "pde_sum"), PDE_SUM_TOL);
    }
    v
}

fn criterion_5(r: &Runs) -> Verdict {
    let mut v = Verdict::default();
    residual_block(&mut v, r, &["fp_fwd", "fp_bwd"], true);
    v
}

fn criterion_6(r: &Runs) -> Verdict {
    let mut v = Verdict::default();
    for s in Scenario::ALL {
        for dir in ["plus", "minus"] {
            let id = format!("relative_entropy_agreement.{dir}");
            v.at_most(format!("{} {id}", s.id()), r.value(s, &id), ENTROPY_AGREEMENT_TOL);
        }
        v.at_most(format!("{} relative_entropy_zero", s.id()), r.value(s, "relative_entropy_zero"), ENTROPY_ZERO_TOL);
        v.at_most(
            format!("{} relative_entropy_antisymmetry", s.id()),
            r.value(s, "relative_entropy_antisymmetry"),
            ANTISYMMETRY_TOL,
        );
    }
    v
}

/// Brute-force path KL by explicit nested enumeration, for cross-checking.
fn brute_force_kl(rho1: &[f64], fwd: &[Vec<Vec<f64>>], bwd: &[Vec<Vec<f64>>]) -> f64 {
    let n = rho1.len();
    let steps = fwd.len();
    // final marginal
    let mut marg = rho1.to_vec();
    for k in fwd {
        marg = (0..n).map(|y| (0..n).map(|x| marg[x] * k[x][y]).sum()).collect();
    }
    let total = n.pow(steps as u32 + 1);
    let mut kl = 0.0;
    for idx in 0..total {
        let path: Vec<usize> = (0..=steps).map(|i| (idx / n.pow((steps - i) as u32)) % n).collect();
        let mut p = rho1[path[0]];
        let mut q = marg[path[steps]];
        for i in 0..steps {
            p *= fwd[i][path[i]][path[i + 1]];
            q *= bwd[i][path[i + 1]][path[i]];
        }
        if p > 0.0 {
            kl += p * (p / q).ln();
        }
    }
    kl
}

fn random_stochastic(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = w.iter().sum();
    w.iter().map(|x| x / s).collect()
}

fn criterion_7() -> Verdict {
    let mut v = Verdict::default();
    let s = chain_statistics(SEED, CHAIN_COUNT).unwrap();
    v.at_most(format!("{CHAIN_COUNT} chains: max |KL| under Bayes reversal"), s.reversal_kl, CHAIN_TOL);
    v.at_most(format!("{CHAIN_COUNT} chains: max |KL - (T1 + T2)|"), s.decomposition_gap, CHAIN_TOL);
    v.at_least(format!("{CHAIN_COUNT} chains: min KL, mismatched pairs"), s.min_kl, -CHAIN_TOL);

    // independent enumeration on a separate stream of chains
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 0x5eed);
    let (mut kl_gap, mut rev_gap, mut min_kl) = (0.0_f64, 0.0_f64, f64::INFINITY);
    for _ in 0..CHAIN_COUNT {
        let n = rng.random_range(2..=5);
        let steps = rng.random_range(1..=4);
        let rho1 = random_stochastic(&mut rng, n);
        let fwd: Vec<Vec<Vec<f64>>> = (0..steps).map(|_| (0..n).map(|_| random_stochastic(&mut rng, n)).collect()).collect();
        let bwd: Vec<Vec<Vec<f64>>> = (0..steps).map(|_| (0..n).map(|_| random_stochastic(&mut rng, n)).collect()).collect();
        let chain = DiscreteChain::new(rho1.clone(), fwd.clone()).unwrap();
        let pair = path_measures_with_backward(&chain, bwd.clone()).unwrap();
        let lib = chain_relative_entropy(&pair, &chain).unwrap();
        let brute = brute_force_kl(&rho1, &fwd, &bwd);
        kl_gap = kl_gap.max((lib.h_plus_minus - brute).abs());
        min_kl = min_kl.min(brute);
        let reversed = chain_path_measures(&chain).unwrap();
        rev_gap = rev_gap.max(brute_force_kl(&rho1, &fwd, &reversed.backward_kernels).abs());
    }
    v.at_most("library KL vs brute-force enumeration", kl_gap, CHAIN_TOL);
    v.at_most("brute-force KL under Bayes reversal", rev_gap, CHAIN_TOL);
    v.at_least("brute-force min KL, mismatched pairs", min_kl, -CHAIN_TOL);

    // biased two-state chain, one transition: KL is zero and T1 = H(rho_2) - H(rho_1)
    let chain = DiscreteChain::new(vec![0.7, 0.3], vec![vec![vec![0.8, 0.2], vec![0.4, 0.6]]]).unwrap();
    let rep = chain_relative_entropy(&chain_path_measures(&chain).unwrap(), &chain).unwrap();
    let h = |p: &[f64]| -p.iter().map(|x| x * x.ln()).sum::<f64>();
    let t1 = h(&[0.68, 0.32]) - h(&[0.7, 0.3]);
    let lib_t1 = rep.terms.iter().find(|t| t.name == "t1").map_or(f64::NAN, |t| t.value);
    v.at_most("two-state chain T1 vs closed form", (lib_t1 - t1).abs(), CHAIN_TOL);
    v.at_most("two-state chain KL", rep.h_plus_minus.abs(), CHAIN_TOL);
    v
}

fn criterion_8(r: &Runs) -> Verdict {
    let mut v = Verdict::default();
    for s in Scenario::ALL {
        v.at_most(format!("{} fisher_agreement", s.id()), r.value(s, "fisher_agreement"), FISHER_AGREEMENT_TOL);
        v.at_most(format!("{} bohm", s.id()), r.value(s, "bohm"), BOHM_TOL);
    }
    // ground state: nu I = omega at every t, so the production over T = 1 is 1
    let g = r.get(Scenario::HarmonicGround);
    let fp = stochmech_core::info::fisher_production(&g.solution.drifts, &g.solution.rho, &g.solution.params).unwrap();
    v.at_most("harmonic_ground direct production vs 1.0", (fp.direct - 1.0).abs(), FISHER_GROUND_TOL);
    v.at_most("harmonic_ground plus form vs 1.0", (fp.plus - 1.0).abs(), FISHER_GROUND_TOL);
    v.at_most("harmonic_ground minus form vs 1.0", (fp.minus - 1.0).abs(), FISHER_GROUND_TOL);
    v
}

fn criterion_9(r: &Runs) -> Verdict {
    let mut v = Verdict::default();
    for s in Scenario::ALL {
        let out = r.get(s);
        let ens = out.ensembles.as_ref().expect("ensembles");
        v.flag(format!("{} forward ensemble has {BORN_PATHS} paths", s.id()), ens.forward.n_paths() == BORN_PATHS);
        v.at_most(format!("{} born_forward KS at 0, T/2, T", s.id()), r.value(s, "born_forward"), KS_FORWARD_TOL);
        v.at_most(format!("{} born_backward KS at 0, T/2, T", s.id()), r.value(s, "born_backward"), KS_BACKWARD_TOL);
    }
    // the free-packet marginal at T must also match the closed-form Gaussian, variance 1
    let f = r.get(Scenario::FreePacket).ensembles.as_ref().unwrap();
    let last = f.forward.tgrid().n_nodes() - 1;
    let mut xs = f.forward.marginal(last);
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let cdf = |x: f64| 0.5 * stochmech_core::scenario::erfc(-x / 2.0_f64.sqrt());
    let ks = xs.iter().enumerate().fold(0.0_f64, |d, (i, &x)| {
        let c = cdf(x);
        d.max((c - i as f64 / n).abs()).max(((i + 1) as f64 / n - c).abs())
    });
    v.at_most("free_packet forward marginal at T vs N(0, 1)", ks, KS_FORWARD_TOL);
    v
}

fn criterion_10(r: &Runs) -> Verdict {
    let mut v = Verdict::default();
    for s in Scenario::ALL {
        for name in ["Y_plus", "Y_minus", "G_plus", "G_minus", "E_plus", "E_minus"] {
            let id = format!("lagrangian.{name}");
            v.at_most(format!("{} {id}", s.id()), r.value(s, &id), IDENTITY_TOL);
        }
        for dir in ["plus", "minus"] {
            let id = format!("functional_offset.{dir}");
            v.at_most(format!("{} {id}", s.id()), r.value(s, &id), OFFSET_TOL);
        }
    }
    for s in Scenario::ANALYTIC {
        v.at_most(format!("{} E[L_G+] - E[L_G-]", s.id()), r.value(s, "g_symmetry"), G_SYMMETRY_TOL);
    }
    v
}

fn criterion_11(r: &Runs) -> Verdict {
    let mut v = Verdict::default();
    for s in Scenario::ANALYTIC {
        for dir in ["plus", "minus"] {
            let id = format!("weak_form_{dir}");
            let row = r.get(s).check(&id);
            v.at_most(format!("{} {id} max |pairing|/||z||", s.id()), row.map_or(f64::NAN, |c| c.value), WEAK_FORM_TOL);
            v.flag(format!("{} {id} every pairing within tolerance", s.id()), row.is_some_and(|c| c.pass));
        }
        // a constant added to b+ must be seen by both pairings
        let cfg = parse_config(&format!(
            "scenario = {}\nchecks = weak_form_plus, weak_form_minus\nfault.drift_shift = {FAULT_SHIFT}\n",
            s.id()
        ))
        .unwrap();
        let faulty = execute(&cfg, Stage::Verify).unwrap();
        let value = |id: &str| faulty.check(id).map_or(f64::NAN, |c| c.value);
        let (p, m) = (value("weak_form_plus"), value("weak_form_minus"));
        v.at_least(
            format!("{} fault detected, max pairing (plus {p:.3e}, minus {m:.3e})", s.id()),
            p.max(m),
            FAULT_FACTOR * WEAK_FORM_TOL,
        );
    }
    v
}

fn criterion_12(r: &Runs) -> Verdict {
    let mut v = Verdict::default();
    let first = r.get(Scenario::Coherent);
    let again = run_full(Scenario::Coherent);
    v.flag("coherent full suite: rerun report byte-identical", first.report_text() == again.report_text());
    let threaded = execute(&full_config(Scenario::Coherent, "threads = 3\n"), Stage::Verify).unwrap();
    let bits = |o: &RunOutcome| o.checks.iter().map(|c| c.value.to_bits()).collect::<Vec<_>>();
    v.flag("threads = 3: every check value bit-identical", bits(first) == bits(&threaded));
    let ens = |o: &RunOutcome| {
        let e = o.ensembles.as_ref().unwrap();
        let mut b: Vec<u64> = e.forward.positions().iter().map(|x| x.to_bits()).collect();
        b.extend(e.backward.positions().iter().map(|x| x.to_bits()));
        b
    };
    v.flag("threads = 3: ensembles bit-identical", ens(first) == ens(&threaded));
    let strip = |s: String| s.lines().filter(|l| !l.starts_with("threads =")).collect::<Vec<_>>().join("\n");
    v.flag("threads = 3: report identical apart from the echoed thread count", strip(first.report_text()) == strip(threaded.report_text()));
    v
}

fn main() -> ExitCode {
    let filter: Option<usize> = std::env::args().skip(1).find_map(|a| a.parse().ok());
    eprintln!("acceptance: running the full suite on every scenario (seed {SEED})");
    let runs = Runs { by_scenario: Scenario::ALL.iter().map(|&s| (s.id(), run_full(s))).collect() };
    let criteria: Vec<(usize, &str, Box<dyn Fn(&Runs) -> Verdict>)> = vec![
        (1, "Schrodinger reference", Box::new(criterion_1)),
        (2, "osmotic identity", Box::new(criterion_2)),
        (3, "Nelson equations and drift dynamics", Box::new(criterion_3)),
        (4, "forward/backward PDEs", Box::new(criterion_4)),
        (5, "Fokker-Planck residuals", Box::new(criterion_5)),
        (6, "relative entropy of path measures", Box::new(criterion_6)),
        (7, "discrete-chain oracle", Box::new(|_: &Runs| criterion_7())),
        (8, "Fisher information production", Box::new(criterion_8)),
        (9, "Born rule from ensembles", Box::new(criterion_9)),
        (10, "Lagrangian equivalences", Box::new(criterion_10)),
        (11, "variational stationarity", Box::new(criterion_11)),
        (12, "reproducibility", Box::new(criterion_12)),
    ];
    let mut failed = Vec::new();
    for (n, name, f) in &criteria {
        if filter.is_some_and(|k| k != *n) {
            continue;
        }
        let verdict = f(&runs);
        let ok = verdict.pass();
        let passed = verdict.items.iter().filter(|i| i.pass).count();
        println!("criterion {n:>2} {:<4} {name} ({passed}/{} items)", if ok { "PASS" } else { "FAIL" }, verdict.items.len());
        for i in verdict.items.iter().filter(|i| !i.pass) {
            println!("    FAIL {}: {:.6e} {} {:.3e}", i.label, i.value, i.bound, i.tol);
        }
        if !ok {
            failed.push(*n);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failing criteria {failed:?}");
        ExitCode::FAILURE
    }
}
