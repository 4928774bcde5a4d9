//! Scenario catalog: default grids, closed-form initial states and, for the
//! three Gaussian scenarios, closed-form oracles for every derived field.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fields::{ComplexField, PhysicsParams, Potential, SpatialGrid, TimeGrid};

/// Initial position variance of the free packet.
pub const FREE_PACKET_VARIANCE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    FreePacket,
    HarmonicGround,
    Coherent,
    DoubleWell,
}

impl Scenario {
    pub const ALL: [Scenario; 4] =
        [Scenario::FreePacket, Scenario::HarmonicGround, Scenario::Coherent, Scenario::DoubleWell];

    /// Scenarios with a closed-form Gaussian solution.
    pub const ANALYTIC: [Scenario; 3] = [Scenario::FreePacket, Scenario::HarmonicGround, Scenario::Coherent];

    pub fn id(&self) -> &'static str {
        match self {
            Scenario::FreePacket => "free_packet",
            Scenario::HarmonicGround => "harmonic_ground",
            Scenario::Coherent => "coherent",
            Scenario::DoubleWell => "double_well",
        }
    }

    pub fn is_analytic(&self) -> bool {
        !matches!(self, Scenario::DoubleWell)
    }

    pub fn default_potential(&self) -> Potential {
        match self {
            Scenario::FreePacket => Potential::Free,
            Scenario::HarmonicGround => Potential::Harmonic { omega: 1.0 },
            Scenario::Coherent => Potential::Coherent { omega: 1.0, x0: 1.0 },
            Scenario::DoubleWell => Potential::DoubleWell { a: 0.02, b: 2.5 },
        }
    }

    pub fn default_grid(&self) -> SpatialGrid {
        match self {
            Scenario::Coherent => SpatialGrid::new(-10.0, 10.0, 513),
            _ => SpatialGrid::new(-8.0, 8.0, 513),
        }
        .expect("default grid is valid")
    }

    /// `T = 1` with `dt = 1e-3`; the coherent state runs to `T = pi/2` with
    /// an even step count so that `T/2` is a node.
    pub fn default_time_grid(&self) -> TimeGrid {
        match self {
            Scenario::Coherent => TimeGrid::new(0.0, 0.5 * PI, 1570),
            _ => TimeGrid::new(0.0, 1.0, 1000),
        }
        .expect("default time grid is valid")
    }

    pub fn default_params(&self) -> PhysicsParams {
        PhysicsParams::new(1.0, 1.0, self.default_potential()).expect("default params are valid")
    }

    /// Closed-form initial wavefunction for this scenario's potential.
    pub fn initial_state(&self, params: &PhysicsParams, grid: &SpatialGrid) -> Result<ComplexField> {
        let (m, hbar) = (params.mass(), params.hbar());
        let (center, width) = match (self, params.potential()) {
            (Scenario::FreePacket, Potential::Free) => (0.0, 1.0 / (2.0 * FREE_PACKET_VARIANCE)),
            (Scenario::HarmonicGround, Potential::Harmonic { omega }) => (0.0, m * omega / hbar),
            (Scenario::Coherent, Potential::Coherent { omega, x0 }) => (x0, m * omega / hbar),
            (Scenario::DoubleWell, Potential::DoubleWell { a, b }) => {
                // harmonic approximation of the left well
                let omega = (8.0 * a * b * b / m).sqrt();
                (-b, m * omega / hbar)
            }
            (s, p) => {
                return Err(Error::InvalidInput(format!(
                    "scenario {} does not use a {} potential",
                    s.id(),
                    p.id()
                )))
            }
        };
        let norm = (width / PI).powf(0.25);
        let last = grid.len() - 1;
        let values = grid
            .points()
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                if i == 0 || i == last {
                    Complex64::new(0.0, 0.0)
                } else {
                    Complex64::new(norm * (-0.5 * width * (x - center).powi(2)).exp(), 0.0)
                }
            })
            .collect();
        ComplexField::new(*grid, values)
    }

    pub fn oracle(&self, params: &PhysicsParams) -> Option<GaussianOracle> {
        let (m, hbar) = (params.mass(), params.hbar());
        match (self, params.potential()) {
            (Scenario::FreePacket, Potential::Free) => Some(GaussianOracle {
                nu: params.nu(),
                kind: OracleKind::Spreading {
                    var0: FREE_PACKET_VARIANCE,
                    kappa: hbar / (2.0 * m * FREE_PACKET_VARIANCE),
                },
            }),
            (Scenario::HarmonicGround, Potential::Harmonic { omega }) => Some(GaussianOracle {
                nu: params.nu(),
                kind: OracleKind::Oscillating { omega, x0: 0.0, var: hbar / (2.0 * m * omega) },
            }),
            (Scenario::Coherent, Potential::Coherent { omega, x0 }) => Some(GaussianOracle {
                nu: params.nu(),
                kind: OracleKind::Oscillating { omega, x0, var: hbar / (2.0 * m * omega) },
            }),
            _ => None,
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.id() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown scenario `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum OracleKind {
    /// Free spreading: `var(t) = var0 (1 + kappa^2 t^2)`, mean 0.
    Spreading { var0: f64, kappa: f64 },
    /// Rigid oscillation: `mean(t) = x0 cos(omega t)`, constant variance.
    Oscillating { omega: f64, x0: f64, var: f64 },
}

/// Exact Gaussian solution: density, current velocity `v` and osmotic
/// velocity `u` at any `(x, t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianOracle {
    nu: f64,
    kind: OracleKind,
}

impl GaussianOracle {
    pub fn mean(&self, t: f64) -> f64 {
        match self.kind {
            OracleKind::Spreading { .. } => 0.0,
            OracleKind::Oscillating { omega, x0, .. } => x0 * (omega * t).cos(),
        }
    }

    pub fn variance(&self, t: f64) -> f64 {
        match self.kind {
            OracleKind::Spreading { var0, kappa } => var0 * (1.0 + kappa * kappa * t * t),
            OracleKind::Oscillating { var, .. } => var,
        }
    }

    pub fn density(&self, x: f64, t: f64) -> f64 {
        let var = self.variance(t);
        let d = x - self.mean(t);
        (-0.5 * d * d / var).exp() / (2.0 * PI * var).sqrt()
    }

    pub fn cdf(&self, x: f64, t: f64) -> f64 {
        0.5 * erfc(-(x - self.mean(t)) / (2.0 * self.variance(t)).sqrt())
    }

    /// `u = nu d/dx ln rho`.
    pub fn osmotic_velocity(&self, x: f64, t: f64) -> f64 {
        -self.nu * (x - self.mean(t)) / self.variance(t)
    }

    /// `v = d mean/dt + (x - mean) * (d sigma/dt) / sigma`.
    pub fn current_velocity(&self, x: f64, t: f64) -> f64 {
        match self.kind {
            OracleKind::Spreading { kappa, .. } => {
                x * kappa * kappa * t / (1.0 + kappa * kappa * t * t)
            }
            OracleKind::Oscillating { omega, x0, .. } => -x0 * omega * (omega * t).sin(),
        }
    }

    pub fn entropy(&self, t: f64) -> f64 {
        0.5 * (2.0 * PI * std::f64::consts::E * self.variance(t)).ln()
    }
}

/// Complementary error function (Numerical Recipes `erfcc`, |rel err| < 1.2e-7).
pub fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let r = t
        * (-z * z - 1.26551223
            + t * (1.00002368
                + t * (0.37409196
                    + t * (0.09678418
                        + t * (-0.18628806
                            + t * (0.27886807
                                + t * (-1.13520398
                                    + t * (1.48851587 + t * (-0.82215223 + t * 0.17087277)))))))))
            .exp();
    if x >= 0.0 {
        r
    } else {
        2.0 - r
    }
}
