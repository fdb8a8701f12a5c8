//! Dense, deliberately naive reference implementations of every tensor
//! object and of the generalized Sinkhorn iteration.
//!
//! Everything here materializes full `N^l` tensors and loops over every
//! entry. That is the point: these routines are the ground truth the fast
//! kernels are verified against, and they double as the solver of record
//! for small instances. An element budget caps the size so a typo in a test
//! cannot ask for a terabyte.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::scalar::{cast, to_f64, Scalar};
use crate::types::{
    Grid1D, Grid2D, KernelParams, Marginal1D, Marginal2D, ResidualMode, ScalingState,
    SinkhornConfig, SolveReport,
};

/// Default cap on dense tensor elements (about 0.8 GB of f64).
pub const DEFAULT_ELEMENT_BUDGET: u64 = 100_000_000;

/// Explicit l-th-order tensor, entries in row-major order (last index
/// fastest).
#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor<T> {
    shape: Vec<usize>,
    entries: Vec<T>,
}

impl<T: Scalar> DenseTensor<T> {
    /// Build a tensor by evaluating `f` at every multi-index, subject to the
    /// element budget.
    pub fn from_fn(
        shape: &[usize],
        budget: u64,
        mut f: impl FnMut(&[usize]) -> T,
    ) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::ShapeMismatch { context: "tensor shape", left: 0, right: 1 });
        }
        let elements = shape.iter().fold(1u128, |acc, &n| acc * n as u128);
        if elements > budget as u128 {
            return Err(Error::SizeOverflow { elements, budget });
        }
        let mut entries = Vec::with_capacity(elements as usize);
        let mut idx = vec![0usize; shape.len()];
        loop {
            entries.push(f(&idx));
            if !advance(&mut idx, shape) {
                break;
            }
        }
        Ok(Self { shape: shape.to_vec(), entries })
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn entries(&self) -> &[T] {
        &self.entries
    }

    pub fn get(&self, idx: &[usize]) -> T {
        self.entries[self.offset(idx)]
    }

    fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        let mut off = 0;
        for (&i, &n) in idx.iter().zip(&self.shape) {
            debug_assert!(i < n);
            off = off * n + i;
        }
        off
    }

    /// Visit every multi-index together with its entry.
    pub fn for_each(&self, mut f: impl FnMut(&[usize], T)) {
        let mut idx = vec![0usize; self.shape.len()];
        for &e in &self.entries {
            f(&idx, e);
            advance(&mut idx, &self.shape);
        }
    }

    /// Frobenius norm of the difference with another tensor of equal shape.
    pub fn frobenius_diff(&self, other: &Self) -> Result<T> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                context: "frobenius diff",
                left: self.entries.len(),
                right: other.entries.len(),
            });
        }
        let sum = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum::<T>();
        Ok(sum.sqrt())
    }
}

/// Row-major odometer step; returns false after the last index.
fn advance(idx: &mut [usize], shape: &[usize]) -> bool {
    for d in (0..idx.len()).rev() {
        idx[d] += 1;
        if idx[d] < shape[d] {
            return true;
        }
        idx[d] = 0;
    }
    false
}

/// Sum of pairwise index distances, the kernel exponent.
fn pairwise_gaps(idx: &[usize]) -> i64 {
    let mut total = 0i64;
    for p in 0..idx.len() {
        for q in (p + 1)..idx.len() {
            total += (idx[p] as i64 - idx[q] as i64).abs();
        }
    }
    total
}

/// Cost tensor `c = h * sum_{p<q} |i_p - i_q|` of order `l` on a uniform
/// grid. Diagonal entries are zero.
pub fn dense_cost<T: Scalar>(grid: &Grid1D<T>, l: usize) -> Result<DenseTensor<T>> {
    dense_cost_with_budget(grid, l, DEFAULT_ELEMENT_BUDGET)
}

pub fn dense_cost_with_budget<T: Scalar>(
    grid: &Grid1D<T>,
    l: usize,
    budget: u64,
) -> Result<DenseTensor<T>> {
    if l < 2 {
        return Err(Error::InvalidParam { name: "l", value: l as f64 });
    }
    let h = grid.spacing();
    DenseTensor::from_fn(&vec![grid.n(); l], budget, |idx| {
        h * cast::<T>(pairwise_gaps(idx) as f64)
    })
}

/// Kernel tensor `K = lambda^(sum of pairwise index distances)`, i.e.
/// `exp(-cost/epsilon)` entrywise. Diagonal entries are one.
pub fn dense_kernel<T: Scalar>(
    grid: &Grid1D<T>,
    params: &KernelParams<T>,
    l: usize,
) -> Result<DenseTensor<T>> {
    dense_kernel_with_budget(grid, params, l, DEFAULT_ELEMENT_BUDGET)
}

pub fn dense_kernel_with_budget<T: Scalar>(
    grid: &Grid1D<T>,
    params: &KernelParams<T>,
    l: usize,
    budget: u64,
) -> Result<DenseTensor<T>> {
    if l < 2 {
        return Err(Error::InvalidParam { name: "l", value: l as f64 });
    }
    let lambda = params.lambda();
    DenseTensor::from_fn(&vec![grid.n(); l], budget, |idx| {
        lambda.powi(pairwise_gaps(idx) as i32)
    })
}

/// Cost tensor over marginals of unequal support sizes that share one
/// spacing.
pub fn pairwise_cost_mixed<T: Scalar>(sizes: &[usize], h: T) -> Result<DenseTensor<T>> {
    if sizes.len() < 2 {
        return Err(Error::InvalidParam { name: "l", value: sizes.len() as f64 });
    }
    DenseTensor::from_fn(sizes, DEFAULT_ELEMENT_BUDGET, |idx| {
        h * cast::<T>(pairwise_gaps(idx) as f64)
    })
}

/// Kernel tensor over marginals of unequal support sizes.
pub fn dense_kernel_mixed<T: Scalar>(
    sizes: &[usize],
    params: &KernelParams<T>,
) -> Result<DenseTensor<T>> {
    if sizes.len() < 2 {
        return Err(Error::InvalidParam { name: "l", value: sizes.len() as f64 });
    }
    let lambda = params.lambda();
    DenseTensor::from_fn(sizes, DEFAULT_ELEMENT_BUDGET, |idx| {
        lambda.powi(pairwise_gaps(idx) as i32)
    })
}

/// 2D interaction of three marginals as an order-3 tensor over flattened
/// `n*m` supports (column-major pairing of `(i1, i2)`).
pub fn dense_cost_2d<T: Scalar>(grid: &Grid2D<T>) -> Result<DenseTensor<T>> {
    let (n, m) = (grid.n(), grid.m());
    let (h1, h2) = (grid.h1(), grid.h2());
    DenseTensor::from_fn(&[n * m; 3], DEFAULT_ELEMENT_BUDGET, |idx| {
        let ax1 = [idx[0] % n, idx[1] % n, idx[2] % n];
        let ax2 = [idx[0] / n, idx[1] / n, idx[2] / n];
        h1 * cast::<T>(pairwise_gaps(&ax1) as f64) + h2 * cast::<T>(pairwise_gaps(&ax2) as f64)
    })
}

pub fn dense_kernel_2d<T: Scalar>(grid: &Grid2D<T>, epsilon: T) -> Result<DenseTensor<T>> {
    let lambda1 = KernelParams::new(grid.h1(), epsilon)?.lambda();
    let lambda2 = KernelParams::new(grid.h2(), epsilon)?.lambda();
    let (n, m) = (grid.n(), grid.m());
    DenseTensor::from_fn(&[n * m; 3], DEFAULT_ELEMENT_BUDGET, |idx| {
        let ax1 = [idx[0] % n, idx[1] % n, idx[2] % n];
        let ax2 = [idx[0] / n, idx[1] / n, idx[2] / n];
        lambda1.powi(pairwise_gaps(&ax1) as i32) * lambda2.powi(pairwise_gaps(&ax2) as i32)
    })
}

/// Elementwise rescale `K <- exp((pot_1(i_1) + ... + pot_l(i_l))/eps) * K`,
/// the dense counterpart of the log-domain kernels.
pub fn dense_rescaled_kernel<T: Scalar>(
    kernel: &DenseTensor<T>,
    potentials: &[&[T]],
    epsilon: T,
) -> Result<DenseTensor<T>> {
    if potentials.len() != kernel.order() {
        return Err(Error::ShapeMismatch {
            context: "rescale potentials",
            left: potentials.len(),
            right: kernel.order(),
        });
    }
    for (p, &n) in potentials.iter().zip(kernel.shape()) {
        if p.len() != n {
            return Err(Error::ShapeMismatch { context: "rescale potentials", left: p.len(), right: n });
        }
    }
    DenseTensor::from_fn(kernel.shape(), u64::MAX, |idx| {
        let s = idx
            .iter()
            .enumerate()
            .map(|(mode, &i)| potentials[mode][i])
            .sum::<T>();
        (s / epsilon).exp() * kernel.get(idx)
    })
}

/// Contract the tensor against one vector per bound mode, leaving
/// `free_mode` (0-based) open:
/// `out[m] = sum over bound indices of t * prod_q vectors[q][i_q]`.
pub fn dense_contract<T: Scalar>(
    t: &DenseTensor<T>,
    vectors: &[&[T]],
    free_mode: usize,
) -> Result<Vec<T>> {
    let l = t.order();
    if vectors.len() != l - 1 || free_mode >= l {
        return Err(Error::ShapeMismatch {
            context: "contract arity",
            left: vectors.len(),
            right: l - 1,
        });
    }
    // vectors[q] binds mode q for q < free_mode, mode q+1 afterwards.
    let mode_of = |q: usize| if q < free_mode { q } else { q + 1 };
    for (q, v) in vectors.iter().enumerate() {
        if v.len() != t.shape()[mode_of(q)] {
            return Err(Error::ShapeMismatch {
                context: "contract vector length",
                left: v.len(),
                right: t.shape()[mode_of(q)],
            });
        }
    }
    let mut out = vec![T::zero(); t.shape()[free_mode]];
    t.for_each(|idx, e| {
        let mut term = e;
        for (q, v) in vectors.iter().enumerate() {
            term = term * v[idx[mode_of(q)]];
        }
        out[idx[free_mode]] += term;
    });
    Ok(out)
}

/// Transport plan `t = (prod_j scaling_j) * K` entrywise. Uses the raw
/// scalings; fold potentials with [`ScalingState::effective_scalings`]
/// first if the state was stabilized.
pub fn dense_plan<T: Scalar>(
    state: &ScalingState<T>,
    kernel: &DenseTensor<T>,
) -> Result<DenseTensor<T>> {
    if state.num_marginals() != kernel.order() {
        return Err(Error::ShapeMismatch {
            context: "plan order",
            left: state.num_marginals(),
            right: kernel.order(),
        });
    }
    for (j, &n) in kernel.shape().iter().enumerate() {
        if state.scaling(j).len() != n {
            return Err(Error::ShapeMismatch {
                context: "plan scaling length",
                left: state.scaling(j).len(),
                right: n,
            });
        }
    }
    DenseTensor::from_fn(kernel.shape(), u64::MAX, |idx| {
        let mut e = kernel.get(idx);
        for (j, &i) in idx.iter().enumerate() {
            e = e * state.scaling(j)[i];
        }
        e
    })
}

/// Transport distance `<C, plan> = sum c * K * prod_j scaling_j`.
pub fn dense_distance<T: Scalar>(
    state: &ScalingState<T>,
    cost: &DenseTensor<T>,
    kernel: &DenseTensor<T>,
) -> Result<T> {
    if cost.shape() != kernel.shape() {
        return Err(Error::ShapeMismatch {
            context: "distance shapes",
            left: cost.entries().len(),
            right: kernel.entries().len(),
        });
    }
    let plan = dense_plan(state, kernel)?;
    let mut total = T::zero();
    for (&c, &t) in cost.entries().iter().zip(plan.entries()) {
        total += c * t;
    }
    Ok(total)
}

/// Generalized Sinkhorn iteration over an explicit kernel tensor, for any
/// number of marginals. Scaling updates run in marginal order, each using
/// the freshest peers; the residual sums the constraint violations chosen
/// by `config.residual_mode`. Stabilization is not implemented here: the
/// oracle runs the plain iteration.
pub fn dense_sinkhorn_general<T: Scalar>(
    marginals: &[Marginal1D<T>],
    cost: &DenseTensor<T>,
    kernel: &DenseTensor<T>,
    config: &SinkhornConfig<T>,
) -> Result<(ScalingState<T>, SolveReport<T>)> {
    config.validate()?;
    let l = marginals.len();
    if l < 2 || l != kernel.order() {
        return Err(Error::ShapeMismatch { context: "marginal count", left: l, right: kernel.order() });
    }
    for (j, m) in marginals.iter().enumerate() {
        if m.len() != kernel.shape()[j] {
            return Err(Error::ShapeMismatch {
                context: "marginal length",
                left: m.len(),
                right: kernel.shape()[j],
            });
        }
    }

    let start = Instant::now();
    let mut state = ScalingState::uniform_with_sizes(kernel.shape());
    let mut residuals: Vec<T> = Vec::new();
    let mut iter_elapsed = Vec::new();

    let contract_skip = |state: &ScalingState<T>, j: usize| -> Result<Vec<T>> {
        let bound: Vec<&[T]> = (0..l).filter(|&q| q != j).map(|q| state.scaling(q)).collect();
        dense_contract(kernel, &bound, j)
    };

    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.itr_max {
        iterations += 1;
        for j in 0..l {
            let denom = contract_skip(&state, j)?;
            let s = &mut state.scalings[j];
            for ((x, &m), &d) in s.iter_mut().zip(marginals[j].weights()).zip(&denom) {
                *x = m / d;
            }
            if s.iter().any(|x| !x.is_finite()) {
                return Err(Error::NumericalOverflow {
                    iteration: iterations,
                    residuals: residuals.iter().map(|&r| to_f64(r)).collect(),
                });
            }
        }
        let checked = match config.residual_mode {
            ResidualMode::Partial => l - 1,
            ResidualMode::Full => l,
        };
        let mut res = T::zero();
        for j in 0..checked {
            let prod = contract_skip(&state, j)?;
            for ((&x, &m), &d) in state.scaling(j).iter().zip(marginals[j].weights()).zip(&prod) {
                res += (x * d - m).abs();
            }
        }
        if !res.is_finite() {
            return Err(Error::NumericalOverflow {
                iteration: iterations,
                residuals: residuals.iter().map(|&r| to_f64(r)).collect(),
            });
        }
        residuals.push(res);
        iter_elapsed.push(start.elapsed().as_secs_f64());
        if res <= config.tol {
            converged = true;
            break;
        }
    }

    let distance = dense_distance(&state, cost, kernel)?;
    let absorptions = vec![0; iterations];
    let report = SolveReport {
        distance,
        iterations,
        residuals,
        converged,
        elapsed: start.elapsed(),
        iter_elapsed_s: iter_elapsed,
        absorptions,
        config: *config,
    };
    Ok((state, report))
}

/// Three-marginal 1D reference solve on a uniform grid.
pub fn dense_sinkhorn<T: Scalar>(
    u: &Marginal1D<T>,
    v: &Marginal1D<T>,
    w: &Marginal1D<T>,
    grid: &Grid1D<T>,
    config: &SinkhornConfig<T>,
) -> Result<(ScalingState<T>, SolveReport<T>)> {
    for m in [u, v, w] {
        if m.len() != grid.n() {
            return Err(Error::ShapeMismatch { context: "marginal length", left: m.len(), right: grid.n() });
        }
    }
    let params = KernelParams::from_grid(grid, config.epsilon)?;
    let cost = dense_cost(grid, 3)?;
    let kernel = dense_kernel(grid, &params, 3)?;
    dense_sinkhorn_general(&[u.clone(), v.clone(), w.clone()], &cost, &kernel, config)
}

/// Three-marginal 2D reference solve: flattens the fields column-major and
/// runs the general iteration over the flattened order-3 tensors.
pub fn dense_sinkhorn_2d<T: Scalar>(
    u: &Marginal2D<T>,
    v: &Marginal2D<T>,
    w: &Marginal2D<T>,
    config: &SinkhornConfig<T>,
) -> Result<(ScalingState<T>, SolveReport<T>)> {
    if u.grid() != v.grid() || u.grid() != w.grid() {
        return Err(Error::ShapeMismatch {
            context: "2d marginal grids",
            left: u.weights().len(),
            right: w.weights().len(),
        });
    }
    let cost = dense_cost_2d(u.grid())?;
    let kernel = dense_kernel_2d(u.grid(), config.epsilon)?;
    let flat = |m: &Marginal2D<T>| Marginal1D::new(m.weights().to_vec());
    dense_sinkhorn_general(&[flat(u)?, flat(v)?, flat(w)?], &cost, &kernel, config)
}
