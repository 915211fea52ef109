use crate::expr::ExprError;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("point {point:?} lies outside the chart domain")]
    OutsideDomain { point: Vec<f64> },
    #[error("metric is numerically degenerate (condition number {condition:.3e})")]
    DegenerateMetric { condition: f64 },
    #[error("requested derivative order {requested} exceeds configured maximum {max}")]
    OrderExceeded { requested: usize, max: usize },
    #[error("trajectory left the chart domain at t = {t}")]
    BoundaryExit { t: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("unsupported for this fixture: {0}")]
    Unsupported(String),
    #[error("normal chart does not fit in the domain even at radii ({r_transverse}, {r_leafwise})")]
    ChartTooLarge { r_transverse: f64, r_leafwise: f64 },
    #[error("candidate lattice spacing {spacing} exceeds {limit}")]
    RegionTooCoarse { spacing: f64, limit: f64 },
    #[error("point {point:?} is not covered by any chart")]
    Uncovered { point: Vec<f64> },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("expression error in '{source_text}': {error}")]
    Expression { source_text: String, error: ExprError },
    #[error("fixture error: {0}")]
    Fixture(String),
}

pub type Result<T> = std::result::Result<T, Error>;
