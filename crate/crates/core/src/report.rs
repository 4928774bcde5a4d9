//! Check rows and the files written from them: the verification report,
//! field dumps and long-format plot data. Everything here is a pure function
//! of its inputs so that repeated runs produce identical bytes.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::fields::SpatialGrid;
use crate::history::DensityHistory;
use crate::schrodinger::DriftHistory;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Text,
}

impl OutputFormat {
    pub fn id(&self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Text => "text",
        }
    }

    pub fn extension(&self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Text => "txt",
        }
    }
}

impl FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "text" | "structured_text" => Ok(OutputFormat::Text),
            _ => Err(format!("unknown format `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bound {
    AtMost,
    AtLeast,
}

impl Bound {
    fn symbol(&self) -> &'static str {
        match self {
            Bound::AtMost => "<=",
            Bound::AtLeast => ">=",
        }
    }
}

/// One report row. Rows with `gating == false` are diagnostics: printed with
/// their verdict but ignored by the exit status.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub id: String,
    pub value: f64,
    pub bound: Bound,
    pub tolerance: f64,
    pub pass: bool,
    pub gating: bool,
    pub note: String,
}

impl CheckResult {
    pub fn at_most(id: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            id: id.into(),
            value,
            bound: Bound::AtMost,
            tolerance,
            // NaN never passes
            pass: value <= tolerance,
            gating: true,
            note: String::new(),
        }
    }

    pub fn at_least(id: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self { bound: Bound::AtLeast, pass: value >= tolerance, ..Self::at_most(id, value, tolerance) }
    }

    pub fn diagnostic(mut self) -> Self {
        self.gating = false;
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self
    }

    pub fn verdict(&self) -> &'static str {
        match (self.pass, self.gating) {
            (true, true) => "pass",
            (false, true) => "FAIL",
            (true, false) => "info-ok",
            (false, false) => "info-off",
        }
    }
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} = {:.6e} {} {:.3e} [{}]", self.id, self.value, self.bound.symbol(), self.tolerance, self.verdict())
    }
}

/// One long-format plot observation.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotRow {
    pub quantity: String,
    pub x: Option<f64>,
    pub t: Option<f64>,
    pub value: f64,
    pub stderr: Option<f64>,
}

impl PlotRow {
    pub fn series(quantity: &str, t: f64, value: f64) -> Self {
        Self { quantity: quantity.to_string(), x: None, t: Some(t), value, stderr: None }
    }
}

/// Structured-text or CSV report: the full configuration echo followed by
/// one row per check.
pub fn render_report(
    format: OutputFormat,
    config_echo: &str,
    checks: &[CheckResult],
    warnings: &[String],
) -> String {
    let mut s = String::new();
    match format {
        OutputFormat::Text => {
            s.push_str("[config]\n");
            s.push_str(config_echo);
            s.push_str("\n[checks]\n");
            let width = checks.iter().map(|c| c.id.len()).max().unwrap_or(2).max(2);
            for c in checks {
                let _ = write!(
                    s,
                    "{:<width$}  {:>14.6e}  {}  {:<10.3e}  {}",
                    c.id,
                    c.value,
                    c.bound.symbol(),
                    c.tolerance,
                    c.verdict()
                );
                if !c.note.is_empty() {
                    let _ = write!(s, "  # {}", c.note);
                }
                s.push('\n');
            }
            if !warnings.is_empty() {
                s.push_str("\n[warnings]\n");
                for w in warnings {
                    s.push_str(w);
                    s.push('\n');
                }
            }
            let gating: Vec<_> = checks.iter().filter(|c| c.gating).collect();
            let passed = gating.iter().filter(|c| c.pass).count();
            let _ = writeln!(s, "\n[summary]\npassed = {passed}\ngating = {}", gating.len());
        }
        OutputFormat::Csv => {
            s.push_str("id,value,bound,tolerance,verdict,note\n");
            for c in checks {
                let _ = writeln!(
                    s,
                    "{},{:.6e},{},{:.3e},{},{}",
                    c.id,
                    c.value,
                    c.bound.symbol(),
                    c.tolerance,
                    c.verdict(),
                    csv_field(&c.note)
                );
            }
        }
    }
    s
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// `x,t,rho,u,v,b_plus,b_minus` at every spatial point of every
/// `stride`-th time node (the final node is always included).
pub fn fields_csv(drifts: &DriftHistory, rho: &DensityHistory, stride: usize) -> String {
    let grid = drifts.grid();
    let tg = drifts.tgrid();
    let mut s = String::from("x,t,rho,u,v,b_plus,b_minus\n");
    for k in time_nodes(tg.n_nodes(), stride) {
        let t = tg.t(k);
        for i in 0..grid.len() {
            let _ = writeln!(
                s,
                "{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e}",
                grid.x(i),
                t,
                rho.rho()[k][i],
                drifts.u()[k][i],
                drifts.v()[k][i],
                drifts.b_plus()[k][i],
                drifts.b_minus()[k][i]
            );
        }
    }
    s
}

pub(crate) fn time_nodes(n_nodes: usize, stride: usize) -> Vec<usize> {
    let stride = stride.max(1);
    let mut ks: Vec<usize> = (0..n_nodes).step_by(stride).collect();
    if ks.last() != Some(&(n_nodes - 1)) {
        ks.push(n_nodes - 1);
    }
    ks
}

/// Density rows for the plot file, one per grid point per selected time node.
pub fn density_rows(grid: &SpatialGrid, rho: &DensityHistory, stride: usize) -> Vec<PlotRow> {
    let tg = rho.tgrid();
    time_nodes(tg.n_nodes(), stride)
        .into_iter()
        .flat_map(|k| {
            (0..grid.len()).map(move |i| PlotRow {
                quantity: "rho".into(),
                x: Some(grid.x(i)),
                t: Some(tg.t(k)),
                value: rho.rho()[k][i],
                stderr: None,
            })
        })
        .collect()
}

/// `quantity,x,t,value,stderr`; absent coordinates are left empty.
pub fn plot_csv(rows: &[PlotRow]) -> String {
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.10e}"));
    let mut s = String::from("quantity,x,t,value,stderr\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{:.10e},{}", csv_field(&r.quantity), opt(r.x), opt(r.t), r.value, opt(r.stderr));
    }
    s
}
