//! Flat `key = value` run configuration with dotted namespaces.
//!
//! ```text
//! # comments start with '#'
//! scenario = coherent
//! seed = 42
//! sampler.n_paths = 100000
//! checks = osmotic, nelson2, born_forward
//! ```
//!
//! Every key not given takes the scenario default; [`emit`] writes all keys
//! explicitly, and parsing the emitted text yields an equal configuration.

use std::collections::BTreeSet;
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::fields::{PhysicsParams, Potential, SpatialGrid, TimeGrid};
use crate::pipeline::CheckId;
use crate::report::OutputFormat;
use crate::sampler::SamplerConfig;
use crate::scenario::Scenario;
use crate::schrodinger::DEFAULT_DENSITY_FLOOR;

/// Relative tolerance for a configured `physics.nu` against `hbar / 2m`.
const NU_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub seed: Option<u64>,
    pub grid: SpatialGrid,
    pub tgrid: TimeGrid,
    pub params: PhysicsParams,
    pub n_paths: usize,
    pub record_stride: Option<usize>,
    pub checks: Vec<CheckId>,
    pub output_dir: PathBuf,
    pub format: OutputFormat,
    pub dump_fields: bool,
    pub dump_ensembles: bool,
    /// Time-node stride of field and density dumps.
    pub field_stride: usize,
    pub density_floor: f64,
    /// Worker threads; 0 lets the runtime decide.
    pub threads: usize,
    /// Constant added to both drifts before verification (fault injection).
    pub drift_shift: f64,
}

impl RunConfig {
    /// Scenario defaults with every check that applies to the scenario.
    pub fn defaults(scenario: Scenario) -> Self {
        Self {
            scenario,
            seed: None,
            grid: scenario.default_grid(),
            tgrid: scenario.default_time_grid(),
            params: scenario.default_params(),
            n_paths: 100_000,
            record_stride: None,
            checks: CheckId::defaults_for(scenario),
            output_dir: PathBuf::from("out"),
            format: OutputFormat::Text,
            dump_fields: false,
            dump_ensembles: false,
            field_stride: 10,
            density_floor: DEFAULT_DENSITY_FLOOR,
            threads: 0,
            drift_shift: 0.0,
        }
    }

    pub fn sampler(&self) -> Result<SamplerConfig> {
        let seed = self.seed.ok_or_else(|| Error::InvalidInput("sampling requires a seed".into()))?;
        let mut cfg = SamplerConfig::new(self.n_paths, seed)?;
        cfg.record_stride = self.record_stride;
        Ok(cfg)
    }

    pub fn needs_sampling(&self) -> bool {
        self.checks.iter().any(|c| c.needs_sampling())
    }

    /// Cross-field invariants that single keys cannot check.
    pub fn validate(&self) -> Result<()> {
        self.validate_inner(true)
    }

    /// As [`validate`](Self::validate), but a missing seed is accepted; for
    /// runs that stop before sampling.
    pub fn validate_without_seed(&self) -> Result<()> {
        self.validate_inner(false)
    }

    fn validate_inner(&self, need_seed: bool) -> Result<()> {
        if need_seed && self.needs_sampling() && self.seed.is_none() {
            return Err(Error::Config {
                key: "seed".into(),
                line: 0,
                message: "a seed is required when sampling checks are enabled".into(),
            });
        }
        for c in &self.checks {
            if !c.applies_to(self.scenario) {
                return Err(Error::Config {
                    key: "checks".into(),
                    line: 0,
                    message: format!("check `{}` does not apply to scenario {}", c.id(), self.scenario),
                });
            }
        }
        if self.needs_sampling() && self.seed.is_some() {
            self.sampler()?;
            if let Some(s) = self.record_stride {
                if s == 0 || self.tgrid.n_steps() % s != 0 {
                    return Err(Error::Config {
                        key: "sampler.record_stride".into(),
                        line: 0,
                        message: format!("must divide time.n_steps = {}", self.tgrid.n_steps()),
                    });
                }
            }
        }
        Ok(())
    }
}

fn err(key: &str, line: usize, message: impl Into<String>) -> Error {
    Error::Config { key: key.to_string(), line, message: message.into() }
}

fn num<T: std::str::FromStr>(key: &str, line: usize, v: &str) -> Result<T> {
    v.parse().map_err(|_| err(key, line, format!("cannot parse `{v}`")))
}

fn boolean(key: &str, line: usize, v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(err(key, line, format!("expected true or false, got `{v}`"))),
    }
}

const KEYS: [&str; 26] = [
    "scenario",
    "seed",
    "grid.x_min",
    "grid.x_max",
    "grid.n_points",
    "time.t_start",
    "time.t_end",
    "time.n_steps",
    "physics.mass",
    "physics.hbar",
    "physics.nu",
    "potential.omega",
    "potential.x0",
    "potential.a",
    "potential.b",
    "sampler.n_paths",
    "sampler.record_stride",
    "checks",
    "output.dir",
    "output.format",
    "output.dump_fields",
    "output.dump_ensembles",
    "output.field_stride",
    "density_floor",
    "threads",
    "fault.drift_shift",
];

/// Parses and validates a configuration.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    parse(text, true)
}

/// Parses every key but skips the cross-key checks of [`RunConfig::validate`],
/// for callers that apply overrides before validating.
pub fn parse_config_unchecked(text: &str) -> Result<RunConfig> {
    parse(text, false)
}

fn parse(text: &str, validate: bool) -> Result<RunConfig> {
    let mut entries: Vec<(usize, String, String)> = Vec::new();
    let mut seen = BTreeSet::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (k, v) = content.split_once('=').ok_or_else(|| err(content, line, "expected `key = value`"))?;
        let (k, v) = (k.trim(), v.trim());
        if !KEYS.contains(&k) {
            return Err(err(k, line, "unknown key"));
        }
        if !seen.insert(k.to_string()) {
            return Err(err(k, line, "duplicate key"));
        }
        entries.push((line, k.to_string(), v.to_string()));
    }
    let get = |key: &str| entries.iter().find(|(_, k, _)| k == key).map(|(l, _, v)| (*l, v.as_str()));

    let (sline, sval) = get("scenario").ok_or_else(|| err("scenario", 0, "missing required key"))?;
    let scenario: Scenario = sval.parse().map_err(|_| err("scenario", sline, format!("unknown scenario `{sval}`")))?;
    let mut cfg = RunConfig::defaults(scenario);

    if let Some((l, v)) = get("seed") {
        cfg.seed = Some(num("seed", l, v)?);
    }

    // grid
    let x_min = get("grid.x_min").map(|(l, v)| num("grid.x_min", l, v)).transpose()?.unwrap_or(cfg.grid.x_min());
    let x_max = get("grid.x_max").map(|(l, v)| num("grid.x_max", l, v)).transpose()?.unwrap_or(cfg.grid.x_max());
    let n_points = get("grid.n_points").map(|(l, v)| num("grid.n_points", l, v)).transpose()?.unwrap_or(cfg.grid.len());
    let gline = ["grid.x_min", "grid.x_max", "grid.n_points"].iter().filter_map(|k| get(k)).map(|(l, _)| l).min();
    cfg.grid = SpatialGrid::new(x_min, x_max, n_points).map_err(|e| err("grid", gline.unwrap_or(0), e.to_string()))?;

    let t_start = get("time.t_start").map(|(l, v)| num("time.t_start", l, v)).transpose()?.unwrap_or(cfg.tgrid.t_start());
    let t_end = get("time.t_end").map(|(l, v)| num("time.t_end", l, v)).transpose()?.unwrap_or(cfg.tgrid.t_end());
    let n_steps = get("time.n_steps").map(|(l, v)| num("time.n_steps", l, v)).transpose()?.unwrap_or(cfg.tgrid.n_steps());
    let tline = ["time.t_start", "time.t_end", "time.n_steps"].iter().filter_map(|k| get(k)).map(|(l, _)| l).min();
    cfg.tgrid = TimeGrid::new(t_start, t_end, n_steps).map_err(|e| err("time", tline.unwrap_or(0), e.to_string()))?;

    // potential: only the parameters of the scenario's family are accepted
    let mut potential = cfg.params.potential();
    let pot_key = |key: &str, current: f64| -> Result<f64> {
        get(key).map(|(l, v)| num(key, l, v)).transpose().map(|o| o.unwrap_or(current))
    };
    let allowed: &[&str] = match potential {
        Potential::Free => &[],
        Potential::Harmonic { .. } => &["potential.omega"],
        Potential::Coherent { .. } => &["potential.omega", "potential.x0"],
        Potential::DoubleWell { .. } => &["potential.a", "potential.b"],
    };
    for k in ["potential.omega", "potential.x0", "potential.a", "potential.b"] {
        if let (Some((l, _)), false) = (get(k), allowed.contains(&k)) {
            return Err(err(k, l, format!("not a parameter of the {} potential", potential.id())));
        }
    }
    potential = match potential {
        Potential::Free => Potential::Free,
        Potential::Harmonic { omega } => Potential::Harmonic { omega: pot_key("potential.omega", omega)? },
        Potential::Coherent { omega, x0 } => {
            Potential::Coherent { omega: pot_key("potential.omega", omega)?, x0: pot_key("potential.x0", x0)? }
        }
        Potential::DoubleWell { a, b } => {
            Potential::DoubleWell { a: pot_key("potential.a", a)?, b: pot_key("potential.b", b)? }
        }
    };
    let mass = pot_key("physics.mass", cfg.params.mass())?;
    let hbar = pot_key("physics.hbar", cfg.params.hbar())?;
    let pline = get("physics.mass").or(get("physics.hbar")).map(|(l, _)| l).unwrap_or(0);
    cfg.params = PhysicsParams::new(mass, hbar, potential).map_err(|e| err("physics", pline, e.to_string()))?;
    if let Some((l, v)) = get("physics.nu") {
        let nu: f64 = num("physics.nu", l, v)?;
        let want = cfg.params.nu();
        if (nu - want).abs() > NU_TOL * want {
            return Err(err(
                "physics.nu",
                l,
                format!("nu = {nu} is inconsistent with physics.hbar / (2 physics.mass) = {want}"),
            ));
        }
    }

    if let Some((l, v)) = get("sampler.n_paths") {
        cfg.n_paths = num("sampler.n_paths", l, v)?;
    }
    if let Some((l, v)) = get("sampler.record_stride") {
        cfg.record_stride = if v == "auto" { None } else { Some(num("sampler.record_stride", l, v)?) };
    }
    if let Some((l, v)) = get("checks") {
        cfg.checks = parse_checks(v, scenario).map_err(|m| err("checks", l, m))?;
    }
    if let Some((_, v)) = get("output.dir") {
        cfg.output_dir = PathBuf::from(v);
    }
    if let Some((l, v)) = get("output.format") {
        cfg.format = v.parse().map_err(|_| err("output.format", l, format!("expected csv or text, got `{v}`")))?;
    }
    if let Some((l, v)) = get("output.dump_fields") {
        cfg.dump_fields = boolean("output.dump_fields", l, v)?;
    }
    if let Some((l, v)) = get("output.dump_ensembles") {
        cfg.dump_ensembles = boolean("output.dump_ensembles", l, v)?;
    }
    if let Some((l, v)) = get("output.field_stride") {
        cfg.field_stride = num("output.field_stride", l, v)?;
        if cfg.field_stride == 0 {
            return Err(err("output.field_stride", l, "must be positive"));
        }
    }
    if let Some((l, v)) = get("density_floor") {
        cfg.density_floor = num("density_floor", l, v)?;
        if !(cfg.density_floor > 0.0) {
            return Err(err("density_floor", l, "must be positive"));
        }
    }
    if let Some((l, v)) = get("threads") {
        cfg.threads = num("threads", l, v)?;
    }
    if let Some((l, v)) = get("fault.drift_shift") {
        cfg.drift_shift = num("fault.drift_shift", l, v)?;
        if !cfg.drift_shift.is_finite() {
            return Err(err("fault.drift_shift", l, "must be finite"));
        }
    }
    if let Some((l, _)) = get("sampler.n_paths") {
        if cfg.n_paths < crate::sampler::MIN_PATHS {
            return Err(err("sampler.n_paths", l, format!("must be at least {}", crate::sampler::MIN_PATHS)));
        }
    }
    if !validate {
        return Ok(cfg);
    }
    cfg.validate().map_err(|e| match e {
        Error::Config { key, message, .. } => {
            let line = get(&key).map(|(l, _)| l).unwrap_or(0);
            Error::Config { key, line, message }
        }
        other => other,
    })?;
    Ok(cfg)
}

/// `all`, `default`, or a comma-separated list of check ids.
pub fn parse_checks(v: &str, scenario: Scenario) -> std::result::Result<Vec<CheckId>, String> {
    match v {
        "all" | "default" => Ok(CheckId::defaults_for(scenario)),
        _ => {
            let mut out = Vec::new();
            for item in v.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                let c: CheckId = item.parse().map_err(|_| format!("unknown check `{item}`"))?;
                if !out.contains(&c) {
                    out.push(c);
                }
            }
            if out.is_empty() {
                return Err("no checks listed".into());
            }
            Ok(out)
        }
    }
}

/// Writes every key explicitly; floats use the shortest round-trip form.
pub fn emit(cfg: &RunConfig) -> String {
    let mut s = String::new();
    let mut kv = |k: &str, v: String| {
        s.push_str(k);
        s.push_str(" = ");
        s.push_str(&v);
        s.push('\n');
    };
    kv("scenario", cfg.scenario.id().into());
    if let Some(seed) = cfg.seed {
        kv("seed", seed.to_string());
    }
    kv("grid.x_min", format!("{:?}", cfg.grid.x_min()));
    kv("grid.x_max", format!("{:?}", cfg.grid.x_max()));
    kv("grid.n_points", cfg.grid.len().to_string());
    kv("time.t_start", format!("{:?}", cfg.tgrid.t_start()));
    kv("time.t_end", format!("{:?}", cfg.tgrid.t_end()));
    kv("time.n_steps", cfg.tgrid.n_steps().to_string());
    kv("physics.mass", format!("{:?}", cfg.params.mass()));
    kv("physics.hbar", format!("{:?}", cfg.params.hbar()));
    kv("physics.nu", format!("{:?}", cfg.params.nu()));
    match cfg.params.potential() {
        Potential::Free => {}
        Potential::Harmonic { omega } => kv("potential.omega", format!("{omega:?}")),
        Potential::Coherent { omega, x0 } => {
            kv("potential.omega", format!("{omega:?}"));
            kv("potential.x0", format!("{x0:?}"));
        }
        Potential::DoubleWell { a, b } => {
            kv("potential.a", format!("{a:?}"));
            kv("potential.b", format!("{b:?}"));
        }
    }
    kv("sampler.n_paths", cfg.n_paths.to_string());
    kv("sampler.record_stride", cfg.record_stride.map_or("auto".into(), |s| s.to_string()));
    kv("checks", cfg.checks.iter().map(|c| c.id()).collect::<Vec<_>>().join(", "));
    kv("output.dir", cfg.output_dir.display().to_string());
    kv("output.format", cfg.format.id().into());
    kv("output.dump_fields", cfg.dump_fields.to_string());
    kv("output.dump_ensembles", cfg.dump_ensembles.to_string());
    kv("output.field_stride", cfg.field_stride.to_string());
    kv("density_floor", format!("{:?}", cfg.density_floor));
    kv("threads", cfg.threads.to_string());
    kv("fault.drift_shift", format!("{:?}", cfg.drift_shift));
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_is_fully_defaulted() {
        let c = parse_config("scenario = coherent\nseed = 7\n").unwrap();
        assert_eq!(c.scenario, Scenario::Coherent);
        assert_eq!(c.seed, Some(7));
        assert_eq!(c.grid, Scenario::Coherent.default_grid());
        assert_eq!(c.n_paths, 100_000);
        assert_eq!(c.checks, CheckId::defaults_for(Scenario::Coherent));
        let echo = emit(&c);
        assert!(echo.contains("physics.nu = 0.5\n"));
        assert!(echo.contains("potential.x0 = 1.0\n"));
    }

    #[test]
    fn round_trip() {
        let text = "# demo\nscenario = double_well\nseed = 3\ngrid.n_points = 257 # coarse\n\
                    potential.a = 0.03\ntime.n_steps = 500\nchecks = osmotic, nelson2, born_forward\n\
                    output.format = csv\nthreads = 2\nfault.drift_shift = 0.1\nsampler.record_stride = 50\n";
        let c = parse_config(text).unwrap();
        let again = parse_config(&emit(&c)).unwrap();
        assert_eq!(c, again);
        assert_eq!(emit(&c), emit(&again));
    }

    #[test]
    fn inconsistent_nu_names_both_keys() {
        let e = parse_config("scenario = free_packet\nphysics.hbar = 1.0\nphysics.nu = 0.3\n").unwrap_err();
        let msg = e.to_string();
        assert!(matches!(e, Error::Config { line: 3, .. }), "{e:?}");
        assert!(msg.contains("physics.nu") && msg.contains("physics.hbar"), "{msg}");
    }

    #[test]
    fn unknown_and_missing_keys() {
        let e = parse_config("scenario = coherent\nsampler.npaths = 10\n").unwrap_err();
        assert_eq!(e, Error::Config { key: "sampler.npaths".into(), line: 2, message: "unknown key".into() });
        assert!(matches!(parse_config("seed = 1\n"), Err(Error::Config { ref key, .. }) if key == "scenario"));
        assert!(matches!(parse_config("scenario = harmonic_ground\npotential.x0 = 1\n"), Err(Error::Config { line: 2, .. })));
    }

    #[test]
    fn sampling_checks_need_a_seed() {
        let e = parse_config("scenario = coherent\n").unwrap_err();
        assert!(matches!(e, Error::Config { ref key, .. } if key == "seed"), "{e:?}");
        assert!(parse_config("scenario = coherent\nchecks = osmotic, nelson1\n").is_ok());
    }

    #[test]
    fn inapplicable_check_is_rejected() {
        let e = parse_config("scenario = free_packet\nchecks = stationarity\n").unwrap_err();
        assert!(matches!(e, Error::Config { line: 2, .. }), "{e:?}");
    }
}
