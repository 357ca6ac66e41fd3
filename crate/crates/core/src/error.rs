use thiserror::Error;

/// Divisor families of the non-resonance conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum DivisorKind {
    Frequency,
    Plus,
    Minus,
}

impl DivisorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            DivisorKind::Frequency => "frequency",
            DivisorKind::Plus => "plus",
            DivisorKind::Minus => "minus",
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("overflow: {0}")]
    Overflow(String),
    #[error("infeasible sigma schedule: precondition integral {integral} >= sigma {sigma}")]
    InfeasibleSchedule { integral: f64, sigma: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("divisor violation ({}) at k={k:?}, i={i}, j={j}: |divisor|={value:e} < threshold {threshold:e}", kind.as_str())]
    DivisorViolation {
        k: Vec<i32>,
        i: usize,
        j: usize,
        kind: DivisorKind,
        value: f64,
        threshold: f64,
    },
    #[error("flow domain error: generator size {size:e} exceeds threshold {threshold:e}")]
    FlowDomain { size: f64, threshold: f64 },
    #[error("Lie series diverges: term {m} has norm {norm:e} >= previous {prev:e}")]
    LieDivergence { m: usize, norm: f64, prev: f64 },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
