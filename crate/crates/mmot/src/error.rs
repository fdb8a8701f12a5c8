//! Error variants shared by the whole crate.

use thiserror::Error;

/// Everything that can go wrong while building instances or solving.
#[derive(Debug, Error)]
pub enum Error {
    /// A probability weight was negative.
    #[error("negative mass at index {index}: {value}")]
    NegativeMass { index: usize, value: f64 },

    /// All weights were zero, so no distribution can be formed.
    #[error("all entries are zero, cannot normalize")]
    ZeroMass,

    /// NaN or infinity in an input.
    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },

    /// A signal with zero energy cannot be turned into a distribution.
    #[error("signal has zero energy")]
    ZeroSignal,

    /// Parameter out of its valid range.
    #[error("invalid parameter {name} = {value}")]
    InvalidParam { name: &'static str, value: f64 },

    /// Dimensions of two operands disagree.
    #[error("shape mismatch in {context}: {left} vs {right}")]
    ShapeMismatch {
        context: &'static str,
        left: usize,
        right: usize,
    },

    /// A dense tensor would exceed the element budget.
    #[error("dense tensor of {elements} elements exceeds budget {budget}")]
    SizeOverflow { elements: u128, budget: u64 },

    /// A scaling vector or residual left the finite floating-point range.
    /// Carries the residual trajectory recorded before the failure.
    #[error("numerical overflow at iteration {iteration} (enable stabilization)")]
    NumericalOverflow {
        iteration: usize,
        residuals: Vec<f64>,
    },

    /// More marginals than the region enumeration supports.
    #[error("{l} marginals exceed the supported maximum of {max}")]
    FactorialBudget { l: usize, max: usize },
}

impl Error {
    /// Stable machine-readable category name, used by the CLI.
    pub fn category(&self) -> &'static str {
        match self {
            Error::NegativeMass { .. } => "NegativeMass",
            Error::ZeroMass => "ZeroMass",
            Error::NonFinite { .. } => "NonFinite",
            Error::ZeroSignal => "ZeroSignal",
            Error::InvalidParam { .. } => "InvalidParam",
            Error::ShapeMismatch { .. } => "ShapeMismatch",
            Error::SizeOverflow { .. } => "SizeOverflow",
            Error::NumericalOverflow { .. } => "NumericalOverflow",
            Error::FactorialBudget { .. } => "FactorialBudget",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
