//! Numerical laboratory for Nelson stochastic mechanics in one dimension.
//!
//! A Crank–Nicolson reference solution of the Schrödinger equation is
//! decomposed into density and forward/backward drift fields; those fields
//! drive an Euler–Maruyama path sampler, information measures on path space,
//! PDE residuals for every dynamical identity, and the Lagrangian/variational
//! checks. [`pipeline`] wires the stages together for the command-line runner.

pub mod config;
pub mod error;
pub mod fields;
pub mod history;
pub mod info;
pub mod nelson;
pub mod pipeline;
pub mod report;
pub mod sampler;
pub mod scenario;
pub mod schrodinger;
pub mod variational;

pub use error::{Error, Result};
pub use fields::{
    expectation, fd_operator, integrate, time_integrate, ComplexField, FdKind, PhysicsParams, Potential, ScalarField,
    SpatialGrid, TimeGrid, Unit,
};
pub use config::{emit, parse_config, RunConfig};
pub use history::DensityHistory;
pub use info::{DiscreteChain, EntropyReport, FisherProduction};
pub use nelson::{EquationId, PotentialField, ResidualReport};
pub use pipeline::{execute, write_outputs, CheckId, RunOutcome, Stage, StageFailure};
pub use report::{CheckResult, OutputFormat};
pub use sampler::{Direction, PathEnsemble, SamplerConfig};
pub use scenario::Scenario;
pub use schrodinger::{born_density, decompose, extract_drifts, propagate, AmplitudePhase, DriftHistory, WavefunctionHistory};
