use thiserror::Error;

/// Errors raised by the geometric kernels.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point ({x:?}, {v:?}) lies outside the domain of L: {reason}")]
    Domain {
        x: Vec<f64>,
        v: Vec<f64>,
        reason: String,
    },
    #[error("derivative order {0} is not supported (maximum is 4)")]
    UnsupportedOrder(usize),
    #[error("at least one seed direction is required")]
    EmptySeeds,
    #[error("fundamental tensor is numerically degenerate (spectrum {spectrum:?})")]
    Degenerate { spectrum: Vec<f64> },
    #[error("frame construction failed: {0}")]
    Frame(String),
    #[error("submanifold geometry failure: {0}")]
    Geometry(String),
    #[error("requested window [{lo}, {hi}] exceeds the available span [0, {span}]")]
    Span { lo: f64, hi: f64, span: f64 },
    #[error("invalid input: {0}")]
    Input(String),
    #[error("expression error: {0}")]
    Expression(String),
    #[error("scenario error: {0}")]
    Scenario(String),
}

pub type Result<T> = std::result::Result<T, GeometryError>;

impl GeometryError {
    pub(crate) fn domain(x: &[f64], v: &[f64], reason: impl Into<String>) -> Self {
        GeometryError::Domain {
            x: x.to_vec(),
            v: v.to_vec(),
            reason: reason.into(),
        }
    }
}
