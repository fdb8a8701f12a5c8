//! Entropy-regularized multi-marginal optimal transport with L1 pairwise
//! cost, solved by Sinkhorn scaling with linear-time tensor-vector
//! products.
//!
//! The joint kernel `exp(-cost/epsilon)` of an L1 pairwise cost on a
//! uniform grid is separable: on each sort-order region of the index cube
//! it is a product of per-index powers of a single decay factor
//! `lambda = exp(-h/epsilon)`. That turns every kernel contraction of the
//! Sinkhorn iteration into prefix/suffix recurrences that run in O(N)
//! instead of O(N^l), for any number of marginals and in one or two grid
//! dimensions.
//!
//! The crate is organized around that idea:
//!
//! - [`types`]: grids, marginals, kernel parameters, configuration.
//! - [`ftvp1d`]: the linear-time contraction sweeps (plain, cost-weighted,
//!   and log-domain rescaled) for the three-marginal 1D kernel.
//! - [`solver`]: the fast Sinkhorn driver for three 1D marginals, with
//!   optional log-domain stabilization.
//! - [`ftvp2d`]: contraction and solver for marginals on a 2D grid.
//! - [`multimarginal`]: the general `l`-marginal region engine and solver.
//! - [`oracle`]: dense brute-force reference implementations used as
//!   ground truth in tests and for small instances.
//! - [`signals`]: seeded random instances, Ricker wavelets, and image
//!   conversion.
//!
//! Everything numeric is generic over [`Scalar`] (any `num_traits::Float`
//! with the usual extras); `f64` aliases for the main types are exported at
//! the crate root.

pub mod error;
pub mod ftvp1d;
pub mod ftvp2d;
pub mod multimarginal;
pub mod oracle;
pub mod scalar;
pub mod signals;
pub mod solver;
pub mod types;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use types::{
    CoefficientTable, Grid1D, Grid2D, KernelParams, Marginal1D, Marginal2D, ResidualMode,
    ScalingState, SinkhornConfig, SolveReport,
};

/// Double-precision aliases for the common instantiation.
pub type Grid1D64 = Grid1D<f64>;
pub type Grid2D64 = Grid2D<f64>;
pub type Marginal1D64 = Marginal1D<f64>;
pub type Marginal2D64 = Marginal2D<f64>;
pub type KernelParams64 = KernelParams<f64>;
pub type SinkhornConfig64 = SinkhornConfig<f64>;
pub type ScalingState64 = ScalingState<f64>;
pub type SolveReport64 = SolveReport<f64>;
