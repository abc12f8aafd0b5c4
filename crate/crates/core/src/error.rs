use thiserror::Error;

/// Errors raised by the operator algebra, noise generators, solvers and the
/// experiment harness.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlowError {
    #[error("invalid operator: {0}")]
    InvalidOperator(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("matrix exponential overflowed for an operator of norm {norm:.6e}")]
    Overflow { norm: f64 },

    #[error("family index {index} out of range (family has members 0..={max})")]
    IndexOutOfRange { index: usize, max: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("not enough Wiener paths: need {needed}, have {available}")]
    PathShortfall { needed: usize, available: usize },

    #[error("family members {i} and {j} do not commute (commutator norm {defect:.3e})")]
    NonCommuting { i: usize, j: usize, defect: f64 },

    #[error("chaos expansion needs {count} multi-indices, limit is {limit}")]
    ChaosTooLarge { count: f64, limit: f64 },

    #[error("seed mismatch: flow was driven by seed {flow}, restart by seed {restart}")]
    SeedMismatch { flow: u64, restart: u64 },

    #[error("Picard iteration diverged: residual grew 3 times in a row, empirical contraction factor {factor:.4}")]
    Divergence { factor: f64 },

    #[error("inconsistent input: {0}")]
    InconsistentInput(String),

    #[error("Monte Carlo noise floor reached at increment {increment:.3e}: standard error is {relative_se:.1}% of the estimate; increase the number of paths")]
    NoiseFloor { increment: f64, relative_se: f64 },

    #[error("schema error in `{field}`: expected {expected}, got {actual}")]
    Schema {
        field: String,
        expected: String,
        actual: String,
    },

    #[error("I/O error: {0}")]
    Io(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<FlowError>,
    },
}

impl FlowError {
    /// True for configuration errors, including wrapped ones.
    pub fn is_schema(&self) -> bool {
        match self {
            FlowError::Schema { .. } => true,
            FlowError::Context { source, .. } => source.is_schema(),
            _ => false,
        }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        FlowError::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}

impl From<std::io::Error> for FlowError {
    fn from(err: std::io::Error) -> Self {
        FlowError::Io(err.to_string())
    }
}

impl From<csv::Error> for FlowError {
    fn from(err: csv::Error) -> Self {
        FlowError::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, FlowError>;
