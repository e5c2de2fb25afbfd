use alloc::string::String;
use alloc::vec::Vec;

/// Everything that can go wrong inside the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("shape mismatch in {context}: expected {expected}, found {found}")]
    Shape {
        context: &'static str,
        expected: String,
        found: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("fixed-point inversion diverged after {} iterations", .0.iterations)]
    Divergence(DivergenceReport),

    #[error("block {block} diverged during inversion after {} iterations", report.iterations)]
    BlockDivergence {
        block: usize,
        report: DivergenceReport,
    },

    #[error("evaluation failed: {0}")]
    Evaluation(String),
}

/// Trace of a fixed-point solve that was stopped because its iterates ran away.
#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceReport {
    pub iterations: usize,
    /// Sup-norm of each successive step `x_{k+1} - x_k`.
    pub step_norms: Vec<f64>,
    /// Sup-norm of each iterate.
    pub iterate_norms: Vec<f64>,
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn shape_err(
    context: &'static str,
    expected: impl core::fmt::Debug,
    found: impl core::fmt::Debug,
) -> Error {
    Error::Shape {
        context,
        expected: alloc::format!("{expected:?}"),
        found: alloc::format!("{found:?}"),
    }
}
