//! Core domain types: grids, marginals, kernel parameters, solver
//! configuration, scaling state, and solve reports.
//!
//! All types are immutable after construction and safe to share across
//! threads.

use std::time::Duration;

use crate::error::{Error, Result};
use crate::scalar::{cast, to_f64, Scalar};

/// Uniform 1D grid: `n` points with spacing `h > 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid1D<T> {
    n: usize,
    h: T,
}

impl<T: Scalar> Grid1D<T> {
    pub fn new(n: usize, h: T) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParam { name: "n", value: 0.0 });
        }
        if !h.is_finite() || h <= T::zero() {
            return Err(Error::InvalidParam { name: "h", value: to_f64(h) });
        }
        Ok(Self { n, h })
    }

    /// Grid over `[0, 1]` including both endpoints, so `h = 1/(n-1)`.
    ///
    /// A single-point grid gets unit spacing; no pair distances exist there,
    /// so the value never enters a cost.
    pub fn unit_interval(n: usize) -> Result<Self> {
        Self::interval(n, T::zero(), T::one())
    }

    /// Grid over `[a, b]` including both endpoints.
    pub fn interval(n: usize, a: T, b: T) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParam { name: "n", value: 0.0 });
        }
        if !(b > a) {
            return Err(Error::InvalidParam { name: "b - a", value: to_f64(b - a) });
        }
        let h = if n == 1 {
            T::one()
        } else {
            (b - a) / cast::<T>((n - 1) as f64)
        };
        Self::new(n, h)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> T {
        self.h
    }
}

/// Uniform 2D grid: `n × m` points, vertical spacing `h1` (axis 1, rows)
/// and horizontal spacing `h2` (axis 2, columns).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid2D<T> {
    n: usize,
    m: usize,
    h1: T,
    h2: T,
}

impl<T: Scalar> Grid2D<T> {
    pub fn new(n: usize, m: usize, h1: T, h2: T) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::InvalidParam { name: "n*m", value: (n * m) as f64 });
        }
        for (name, h) in [("h1", h1), ("h2", h2)] {
            if !h.is_finite() || h <= T::zero() {
                return Err(Error::InvalidParam { name, value: to_f64(h) });
            }
        }
        Ok(Self { n, m, h1, h2 })
    }

    /// Grid over `[0,1] × [0,1]` with both endpoints included per axis.
    pub fn unit_square(n: usize, m: usize) -> Result<Self> {
        let g1 = Grid1D::<T>::unit_interval(n)?;
        let g2 = Grid1D::<T>::unit_interval(m)?;
        Self::new(n, m, g1.spacing(), g2.spacing())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn h1(&self) -> T {
        self.h1
    }

    pub fn h2(&self) -> T {
        self.h2
    }

    pub fn len(&self) -> usize {
        self.n * self.m
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Discrete probability weights on a 1D grid.
///
/// Construction rejects negative, non-finite, and all-zero input, and
/// normalizes the rest to unit total mass. Normalizing is idempotent.
#[derive(Clone, Debug, PartialEq)]
pub struct Marginal1D<T> {
    weights: Vec<T>,
}

impl<T: Scalar> Marginal1D<T> {
    pub fn new(raw: impl Into<Vec<T>>) -> Result<Self> {
        let mut weights = raw.into();
        if weights.is_empty() {
            return Err(Error::ZeroMass);
        }
        for (index, &w) in weights.iter().enumerate() {
            if !w.is_finite() {
                return Err(Error::NonFinite { context: "marginal weights" });
            }
            if w < T::zero() {
                return Err(Error::NegativeMass { index, value: to_f64(w) });
            }
        }
        let total: T = weights.iter().copied().sum();
        if total <= T::zero() {
            return Err(Error::ZeroMass);
        }
        for w in &mut weights {
            *w = *w / total;
        }
        Ok(Self { weights })
    }

    /// Point mass at `index` on a grid of `n` points.
    pub fn dirac(n: usize, index: usize) -> Result<Self> {
        if index >= n {
            return Err(Error::ShapeMismatch { context: "dirac index", left: index, right: n });
        }
        let mut w = vec![T::zero(); n];
        w[index] = T::one();
        Self::new(w)
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Discrete probability weights on a 2D grid, flattened column-major
/// (first axis fastest). Column-major layout is normative for all 2D data
/// in this crate.
#[derive(Clone, Debug, PartialEq)]
pub struct Marginal2D<T> {
    weights: Vec<T>,
    grid: Grid2D<T>,
}

impl<T: Scalar> Marginal2D<T> {
    pub fn new(raw: impl Into<Vec<T>>, grid: Grid2D<T>) -> Result<Self> {
        let weights = raw.into();
        if weights.len() != grid.len() {
            return Err(Error::ShapeMismatch {
                context: "2d marginal",
                left: weights.len(),
                right: grid.len(),
            });
        }
        let flat = Marginal1D::new(weights)?;
        Ok(Self { weights: flat.weights, grid })
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn grid(&self) -> &Grid2D<T> {
        &self.grid
    }

    /// One column (fixed second index), contiguous by layout.
    pub fn column(&self, i2: usize) -> &[T] {
        let n = self.grid.n();
        &self.weights[i2 * n..(i2 + 1) * n]
    }
}

/// Decay factor and regularization strength of the separable kernel:
/// `lambda = exp(-h / epsilon)`, always in `(0, 1)`.
///
/// `lambda` is derived from `(h, epsilon)` and cached; it is never set
/// independently. Larger `h` or smaller `epsilon` gives a strictly smaller
/// `lambda`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelParams<T> {
    epsilon: T,
    lambda: T,
}

impl<T: Scalar> KernelParams<T> {
    pub fn new(h: T, epsilon: T) -> Result<Self> {
        if !h.is_finite() || h <= T::zero() {
            return Err(Error::InvalidParam { name: "h", value: to_f64(h) });
        }
        if !epsilon.is_finite() || epsilon <= T::zero() {
            return Err(Error::InvalidParam { name: "epsilon", value: to_f64(epsilon) });
        }
        Ok(Self { epsilon, lambda: (-h / epsilon).exp() })
    }

    pub fn from_grid(grid: &Grid1D<T>, epsilon: T) -> Result<Self> {
        Self::new(grid.spacing(), epsilon)
    }

    pub fn epsilon(&self) -> T {
        self.epsilon
    }

    pub fn lambda(&self) -> T {
        self.lambda
    }
}

/// Exponent coefficients `(a_p, b_p, c_p)` of the six sort-order regions of
/// the three-way L1 kernel. On region `p` the kernel exponent is linear:
/// `a_p*i + b_p*j + c_p*k`. Each row sums to zero, so the exponent is
/// invariant under shifting all indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CoefficientTable {
    a: [i32; 6],
    b: [i32; 6],
    c: [i32; 6],
}

impl CoefficientTable {
    pub fn new() -> Self {
        let t = Self {
            a: [-2, 0, -2, 2, 0, 2],
            b: [0, -2, 2, -2, 2, 0],
            c: [2, 2, 0, 0, -2, -2],
        };
        for p in 0..6 {
            assert_eq!(t.a[p] + t.b[p] + t.c[p], 0, "region {p} coefficients must sum to zero");
        }
        t
    }

    /// Coefficients of region `p` (0-based, `p < 6`).
    pub fn abc(&self, p: usize) -> (i32, i32, i32) {
        (self.a[p], self.b[p], self.c[p])
    }
}

impl Default for CoefficientTable {
    fn default() -> Self {
        Self::new()
    }
}

/// Which marginal-constraint violations the residual sums.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ResidualMode {
    /// All but the last marginal. The last constraint was enforced exactly
    /// by the most recent update, so its violation is rounding noise; this
    /// is the default and the cheapest faithful choice.
    Partial,
    /// Every marginal, for robustness checks.
    Full,
}

/// Sinkhorn loop configuration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SinkhornConfig<T> {
    /// Entropic regularization strength.
    pub epsilon: T,
    /// Residual threshold for early termination.
    pub tol: T,
    /// Iteration cap.
    pub itr_max: usize,
    /// Absorb large scalings into log-domain potentials.
    pub stabilize: bool,
    /// Absorption threshold on the sup norm of any scaling vector.
    pub tau: T,
    /// Which constraint violations the residual sums.
    pub residual_mode: ResidualMode,
}

impl<T: Scalar> Default for SinkhornConfig<T> {
    fn default() -> Self {
        Self {
            epsilon: cast(0.1),
            tol: cast(1e-9),
            itr_max: 100,
            stabilize: false,
            tau: cast(1e30),
            residual_mode: ResidualMode::Partial,
        }
    }
}

impl<T: Scalar> SinkhornConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !self.epsilon.is_finite() || self.epsilon <= T::zero() {
            return Err(Error::InvalidParam { name: "epsilon", value: to_f64(self.epsilon) });
        }
        if !self.tol.is_finite() || self.tol <= T::zero() {
            return Err(Error::InvalidParam { name: "tol", value: to_f64(self.tol) });
        }
        if self.itr_max == 0 {
            return Err(Error::InvalidParam { name: "itr_max", value: 0.0 });
        }
        if !(self.tau > T::one()) {
            return Err(Error::InvalidParam { name: "tau", value: to_f64(self.tau) });
        }
        Ok(())
    }
}

/// Scaling vectors of a Sinkhorn solve, one per marginal, plus the
/// log-domain potentials (all zeros until an absorption happens).
///
/// For positive marginals every scaling entry is strictly positive; a
/// marginal with zero mass at a point pins the corresponding scaling entry
/// to zero, which is harmless for the plan.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalingState<T> {
    pub(crate) scalings: Vec<Vec<T>>,
    pub(crate) potentials: Vec<Vec<T>>,
}

impl<T: Scalar> ScalingState<T> {
    /// The standard solver start: every scaling is `(1/n, ..., 1/n)`,
    /// every potential zero.
    pub fn uniform(marginals: usize, n: usize) -> Self {
        Self::uniform_with_sizes(&vec![n; marginals])
    }

    /// Uniform start over per-marginal support sizes.
    pub fn uniform_with_sizes(sizes: &[usize]) -> Self {
        let scalings = sizes
            .iter()
            .map(|&n| vec![T::one() / cast::<T>(n as f64); n])
            .collect();
        let potentials = sizes.iter().map(|&n| vec![T::zero(); n]).collect();
        Self { scalings, potentials }
    }

    pub fn from_scalings(scalings: Vec<Vec<T>>) -> Result<Self> {
        if scalings.is_empty() {
            return Err(Error::ShapeMismatch { context: "scaling state", left: 0, right: 1 });
        }
        for s in &scalings {
            for &x in s {
                if !x.is_finite() || x < T::zero() {
                    return Err(Error::NonFinite { context: "scaling entries" });
                }
            }
        }
        let potentials = scalings.iter().map(|s| vec![T::zero(); s.len()]).collect();
        Ok(Self { scalings, potentials })
    }

    pub fn num_marginals(&self) -> usize {
        self.scalings.len()
    }

    pub fn len(&self) -> usize {
        self.scalings[0].len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn scaling(&self, j: usize) -> &[T] {
        &self.scalings[j]
    }

    pub fn potential(&self, j: usize) -> &[T] {
        &self.potentials[j]
    }

    /// True once any potential entry is non-zero (an absorption happened).
    pub fn has_potentials(&self) -> bool {
        self.potentials.iter().flatten().any(|&x| x != T::zero())
    }

    /// Largest scaling entry across all marginals.
    pub fn max_scaling(&self) -> T {
        self.scalings
            .iter()
            .flatten()
            .fold(T::zero(), |acc, &x| acc.max(x))
    }

    /// Absorb the scalings into the potentials: `alpha += eps * ln(phi)`,
    /// then reset every scaling to ones. The products
    /// `phi_i * exp(alpha_i / eps)` are unchanged up to rounding.
    ///
    /// Zero scaling entries are clamped to the smallest positive float
    /// before the log so that later ratio factors stay NaN-free; the
    /// corresponding plan entries remain vanishingly small.
    pub fn absorb(&mut self, epsilon: T) {
        let floor = T::min_positive_value();
        for (s, a) in self.scalings.iter_mut().zip(self.potentials.iter_mut()) {
            for (x, pot) in s.iter_mut().zip(a.iter_mut()) {
                *pot = *pot + epsilon * x.max(floor).ln();
                *x = T::one();
            }
        }
    }

    /// `phi_i * exp(alpha_i / eps)` per marginal. This can overflow for the
    /// very regimes stabilization exists for; use only where a plain state
    /// is known to be representable.
    pub fn effective_scalings(&self, epsilon: T) -> Vec<Vec<T>> {
        self.scalings
            .iter()
            .zip(&self.potentials)
            .map(|(s, a)| {
                s.iter()
                    .zip(a)
                    .map(|(&x, &pot)| x * (pot / epsilon).exp())
                    .collect()
            })
            .collect()
    }
}

/// Outcome of one solve: the distance, the residual trajectory, and timing.
#[derive(Clone, Debug)]
pub struct SolveReport<T> {
    /// Regularized transport distance at the final state.
    pub distance: T,
    /// Iterations actually performed.
    pub iterations: usize,
    /// Residual after each iteration; length equals `iterations`.
    pub residuals: Vec<T>,
    /// Whether the residual dropped to the configured tolerance.
    pub converged: bool,
    /// Wall time of the whole solve.
    pub elapsed: Duration,
    /// Cumulative wall time at the end of each iteration, in seconds.
    pub iter_elapsed_s: Vec<f64>,
    /// Number of log-domain absorptions in each iteration (0 or 1).
    pub absorptions: Vec<u32>,
    /// Echo of the configuration the solve ran with.
    pub config: SinkhornConfig<T>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn marginal_normalizes_uniform() {
        let m = Marginal1D::new(vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!(m.weights(), &[0.25, 0.25, 0.25, 0.25]);
    }

    #[test]
    fn marginal_normalizes_single_atom() {
        let m = Marginal1D::new(vec![2.0, 0.0, 0.0]).unwrap();
        assert_eq!(m.weights(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn marginal_rejects_negative() {
        match Marginal1D::new(vec![1.0, -1.0]) {
            Err(Error::NegativeMass { index: 1, .. }) => {}
            other => panic!("expected NegativeMass, got {other:?}"),
        }
    }

    #[test]
    fn marginal_rejects_zero_and_nonfinite() {
        assert!(matches!(Marginal1D::new(vec![0.0, 0.0]), Err(Error::ZeroMass)));
        assert!(matches!(
            Marginal1D::new(vec![1.0, f64::NAN]),
            Err(Error::NonFinite { .. })
        ));
        assert!(matches!(Marginal1D::<f64>::new(vec![]), Err(Error::ZeroMass)));
    }

    #[test]
    fn marginal_validation_is_idempotent() {
        let once = Marginal1D::new(vec![0.3, 1.7, 2.0]).unwrap();
        let twice = Marginal1D::new(once.weights().to_vec()).unwrap();
        assert_eq!(once, twice);
        let sum: f64 = once.weights().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kernel_params_formula() {
        let p = KernelParams::new(0.25, 0.25).unwrap();
        assert!((p.lambda() - (-1.0f64).exp()).abs() < 1e-15);

        // h -> 0+ drives lambda toward 1.
        let p = KernelParams::new(1e-12, 0.1).unwrap();
        assert!(p.lambda() < 1.0 && p.lambda() > 1.0 - 1e-10);

        // The N = 80 unit-interval instance.
        let g = Grid1D::<f64>::unit_interval(80).unwrap();
        let p = KernelParams::from_grid(&g, 0.1).unwrap();
        assert!((p.lambda() - (-10.0f64 / 79.0).exp()).abs() < 1e-15);
    }

    #[test]
    fn kernel_params_rejects_bad_input() {
        assert!(KernelParams::new(0.0, 0.1).is_err());
        assert!(KernelParams::new(0.1, 0.0).is_err());
        assert!(KernelParams::new(-1.0, 0.1).is_err());
    }

    #[test]
    fn kernel_params_monotone() {
        let base = KernelParams::new(0.5, 0.1).unwrap().lambda();
        assert!(KernelParams::new(0.6, 0.1).unwrap().lambda() < base);
        assert!(KernelParams::new(0.5, 0.09).unwrap().lambda() < base);
    }

    #[test]
    fn coefficient_rows_sum_to_zero() {
        let t = CoefficientTable::new();
        assert_eq!(t.abc(0), (-2, 0, 2));
        assert_eq!(t.abc(1), (0, -2, 2));
        assert_eq!(t.abc(2), (-2, 2, 0));
        assert_eq!(t.abc(3), (2, -2, 0));
        assert_eq!(t.abc(4), (0, 2, -2));
        assert_eq!(t.abc(5), (2, 0, -2));
    }

    #[test]
    fn unit_interval_spacing() {
        let g = Grid1D::<f64>::unit_interval(5).unwrap();
        assert_eq!(g.spacing(), 0.25);
        let g1 = Grid1D::<f64>::unit_interval(1).unwrap();
        assert_eq!(g1.spacing(), 1.0);
    }

    #[test]
    fn config_defaults_match_contract() {
        let c = SinkhornConfig::<f64>::default();
        assert_eq!(c.epsilon, 0.1);
        assert_eq!(c.tol, 1e-9);
        assert_eq!(c.itr_max, 100);
        assert_eq!(c.tau, 1e30);
        assert!(!c.stabilize);
        assert_eq!(c.residual_mode, ResidualMode::Partial);
        c.validate().unwrap();
    }

    #[test]
    fn absorb_preserves_effective_scaling() {
        let mut state = ScalingState::from_scalings(vec![
            vec![3.0f64, 0.5, 1e12],
            vec![1.0, 2.0, 4.0],
            vec![0.1, 0.2, 0.3],
        ])
        .unwrap();
        let eps = 0.05;
        let before = state.effective_scalings(eps);
        state.absorb(eps);
        let after = state.effective_scalings(eps);
        for (b, a) in before.iter().flatten().zip(after.iter().flatten()) {
            assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0), "{a} vs {b}");
        }
        assert!(state.has_potentials());
        assert!(state.scalings.iter().flatten().all(|&x| x == 1.0));
    }

    #[test]
    fn generic_scalar_f32_roundtrip() {
        let m = Marginal1D::<f32>::new(vec![1.0_f32, 3.0]).unwrap();
        assert!((m.weights()[0] - 0.25).abs() < 1e-6);
        let p = KernelParams::<f32>::new(0.5_f32, 0.5).unwrap();
        assert!((p.lambda() - (-1.0_f32).exp()).abs() < 1e-6);
    }
}
