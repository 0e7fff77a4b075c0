//! Scenario files, parameter sweeps, rate fits and CSV/JSON outputs.

mod fit;
mod run;
mod scenario;
mod selftest;

use std::path::PathBuf;

pub use fit::{rate_fit, rate_fit_records, RateFit};
pub use run::{
    random_admissible_measure, random_cell, run_scenario, sweep, write_outputs, GapRow, ObstacleRow, RunOptions, ScenarioResult, Sign, GAPS_HEADER,
    OBSTACLE_HEADER,
};
pub use scenario::{Background, Domain, GridSpec, Instance, Method, Perturbation, Scenario};
pub use selftest::{selftest, SelfTestCase};

use crate::estimates::EstimateError;
use crate::geometry::GeometryError;
use crate::measures::MeasureError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("assertion failed: {0}")]
    Assertion(String),
    #[error("{}: {message}", path.display())]
    Io { path: PathBuf, message: String },
    #[error("{context}: {source}")]
    Compute {
        context: String,
        #[source]
        source: EstimateError,
    },
}

impl HarnessError {
    /// Errors caused by the caller's input rather than by a computation.
    pub fn is_invalid_input(&self) -> bool {
        matches!(self, Self::InvalidScenario(_) | Self::Io { .. })
    }

    pub(crate) fn compute<E: Into<EstimateError>>(context: impl Into<String>, e: E) -> Self {
        Self::Compute { context: context.into(), source: e.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, e: impl std::fmt::Display) -> Self {
        Self::Io { path: path.into(), message: e.to_string() }
    }
}

impl From<GeometryError> for HarnessError {
    fn from(e: GeometryError) -> Self {
        Self::InvalidScenario(e.to_string())
    }
}

impl From<MeasureError> for HarnessError {
    fn from(e: MeasureError) -> Self {
        Self::InvalidScenario(e.to_string())
    }
}
