//! General `l`-marginal contraction and solver.
//!
//! The index hypercube splits into `l!` regions, one per sort order of the
//! `l` indices, with canonical tie-breaking so every tuple lands in exactly
//! one region. On a region, sorting turns the pairwise-L1 exponent into a
//! linear form with rank coefficients `2r - l - 1` (rank `r` counted from
//! 1): for any sorted tuple, `sum_{p<q} (x_(q) - x_(p)) =
//! sum_r (2r - l - 1) x_(r)`. Equivalently the exponent telescopes into
//! per-gap weights `m_r = r (l - r)`, all positive, which keeps every
//! accumulator's power of `lambda` nonnegative.
//!
//! Each region is then a chain: a forward pass builds prefix accumulators
//! rank by rank up to the free marginal's rank, a backward pass builds
//! suffix accumulators down to it, and the region's output is their
//! product. Strict inequalities shift the consumed anchor by one step. The
//! cost-weighted variant carries an index-weighted companion accumulator
//! through the same chain and combines by the product rule. Total cost is
//! O(l! * l * N).

use std::time::Instant;

use crate::error::{Error, Result};
use crate::oracle::{dense_kernel_mixed, dense_sinkhorn_general, pairwise_cost_mixed};
use crate::scalar::{cast_index, to_f64, Scalar};
use crate::types::{
    Grid1D, KernelParams, Marginal1D, ResidualMode, ScalingState, SinkhornConfig, SolveReport,
};

/// Region enumeration cap: `8! = 40320` regions is the largest table this
/// module will build.
pub const MAX_MARGINALS: usize = 8;

/// One sort-order region of the `l`-index hypercube.
///
/// `perm[r]` is the marginal (0-based) occupying sorted rank `r`;
/// `strict[r]` says whether the inequality between ranks `r` and `r+1` is
/// strict. Canonical tie-breaking makes the inequality strict exactly when
/// `perm[r] > perm[r+1]`, which reproduces the classical six three-marginal
/// regions and partitions the hypercube exactly.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegionSpec {
    perm: Vec<usize>,
    strict: Vec<bool>,
}

impl RegionSpec {
    fn from_perm(perm: Vec<usize>) -> Self {
        let strict = perm.windows(2).map(|w| w[0] > w[1]).collect();
        Self { perm, strict }
    }

    pub fn order(&self) -> usize {
        self.perm.len()
    }

    /// Marginal occupying sorted rank `r`.
    pub fn marginal_at_rank(&self, r: usize) -> usize {
        self.perm[r]
    }

    /// Whether the inequality between ranks `r` and `r+1` is strict.
    pub fn strict_at(&self, r: usize) -> bool {
        self.strict[r]
    }

    /// Rank coefficients `2r - l - 1` for ranks `r = 1..=l`; they sum to
    /// zero and express the pairwise-gap total of a sorted tuple.
    pub fn rank_coefficients(l: usize) -> Vec<i64> {
        (1..=l).map(|r| 2 * r as i64 - l as i64 - 1).collect()
    }

    /// Membership test for an index tuple (`idx[q]` is marginal `q`'s
    /// index).
    pub fn contains(&self, idx: &[usize]) -> bool {
        debug_assert_eq!(idx.len(), self.perm.len());
        self.perm.windows(2).zip(&self.strict).all(|(w, &s)| {
            let (lo, hi) = (idx[w[0]], idx[w[1]]);
            if s {
                lo < hi
            } else {
                lo <= hi
            }
        })
    }
}

/// All `l!` regions, in lexicographic order of the rank permutation.
pub fn region_table(l: usize) -> Result<Vec<RegionSpec>> {
    if l < 2 {
        return Err(Error::InvalidParam { name: "l", value: l as f64 });
    }
    if l > MAX_MARGINALS {
        return Err(Error::FactorialBudget { l, max: MAX_MARGINALS });
    }
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(l);
    let mut used = vec![false; l];
    fn rec(l: usize, current: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<RegionSpec>) {
        if current.len() == l {
            out.push(RegionSpec::from_perm(current.clone()));
            return;
        }
        for q in 0..l {
            if !used[q] {
                used[q] = true;
                current.push(q);
                rec(l, current, used, out);
                current.pop();
                used[q] = false;
            }
        }
    }
    rec(l, &mut current, &mut used, &mut out);
    Ok(out)
}

/// Add one region's contribution to `plain_out` and, when requested, its
/// cost-weighted contribution to `weighted_out`. `vectors[q]` binds
/// marginal `q`; marginal `l-1` is free.
fn accumulate_region<T: Scalar>(
    spec: &RegionSpec,
    vectors: &[&[T]],
    lambda: T,
    plain_out: &mut [T],
    mut weighted_out: Option<&mut [T]>,
) {
    let l = spec.order();
    let n = plain_out.len();
    let free = l - 1;
    let rho = spec.perm.iter().position(|&q| q == free).expect("free marginal in perm");
    // Gap decays m_r = (r+1)(l-r-1) in 0-based rank r, and rank weights.
    let lam_m: Vec<T> = (0..l - 1)
        .map(|r| lambda.powi(((r + 1) * (l - r - 1)) as i32))
        .collect();
    let coef = RegionSpec::rank_coefficients(l);
    let coef_t = |r: usize| -> T {
        let c = coef[r];
        if c >= 0 {
            cast_index::<T>(c as usize)
        } else {
            -cast_index::<T>((-c) as usize)
        }
    };
    let weighted = weighted_out.is_some();

    // Incoming value of the previous chain stage at anchor `x`, shifted by
    // one when the inequality is strict.
    let consume = |arr: &[T], strict: bool, lam: T, x: usize, back: bool| -> T {
        if strict {
            if back {
                if x + 1 < n {
                    lam * arr[x + 1]
                } else {
                    T::zero()
                }
            } else if x > 0 {
                lam * arr[x - 1]
            } else {
                T::zero()
            }
        } else {
            arr[x]
        }
    };

    // Forward chain over ranks 0..rho.
    let mut acc: Vec<T> = Vec::new();
    let mut wacc: Vec<T> = Vec::new();
    for r in 0..rho {
        let g = vectors[spec.perm[r]];
        let mut next = vec![T::zero(); n];
        let mut wnext = if weighted { vec![T::zero(); n] } else { Vec::new() };
        for x in 0..n {
            let (inp, inw) = if r == 0 {
                (T::one(), T::zero())
            } else {
                (
                    consume(&acc, spec.strict[r - 1], lam_m[r - 1], x, false),
                    if weighted {
                        consume(&wacc, spec.strict[r - 1], lam_m[r - 1], x, false)
                    } else {
                        T::zero()
                    },
                )
            };
            let f = g[x] * inp;
            let carry = if x > 0 { lam_m[r] * next[x - 1] } else { T::zero() };
            next[x] = carry + f;
            if weighted {
                let fw = g[x] * (inw + coef_t(r) * cast_index::<T>(x + 1) * inp);
                let wcarry = if x > 0 { lam_m[r] * wnext[x - 1] } else { T::zero() };
                wnext[x] = wcarry + fw;
            }
        }
        acc = next;
        wacc = wnext;
    }

    // Backward chain over ranks l-1 down to rho+1. The accumulator of rank
    // r decays with the gap below it, m_{r-1}.
    let mut bacc: Vec<T> = Vec::new();
    let mut wbacc: Vec<T> = Vec::new();
    for r in (rho + 1..l).rev() {
        let g = vectors[spec.perm[r]];
        let mut next = vec![T::zero(); n];
        let mut wnext = if weighted { vec![T::zero(); n] } else { Vec::new() };
        for x in (0..n).rev() {
            let (outp, outw) = if r == l - 1 {
                (T::one(), T::zero())
            } else {
                (
                    consume(&bacc, spec.strict[r], lam_m[r], x, true),
                    if weighted {
                        consume(&wbacc, spec.strict[r], lam_m[r], x, true)
                    } else {
                        T::zero()
                    },
                )
            };
            let f = g[x] * outp;
            let carry = if x + 1 < n { lam_m[r - 1] * next[x + 1] } else { T::zero() };
            next[x] = carry + f;
            if weighted {
                let fw = g[x] * (outw + coef_t(r) * cast_index::<T>(x + 1) * outp);
                let wcarry = if x + 1 < n { lam_m[r - 1] * wnext[x + 1] } else { T::zero() };
                wnext[x] = wcarry + fw;
            }
        }
        bacc = next;
        wbacc = wnext;
    }

    // Combine prefix and suffix at the free rank.
    for x in 0..n {
        let (pre, pre_w) = if rho == 0 {
            (T::one(), T::zero())
        } else {
            (
                consume(&acc, spec.strict[rho - 1], lam_m[rho - 1], x, false),
                if weighted {
                    consume(&wacc, spec.strict[rho - 1], lam_m[rho - 1], x, false)
                } else {
                    T::zero()
                },
            )
        };
        let (suf, suf_w) = if rho == l - 1 {
            (T::one(), T::zero())
        } else {
            (
                consume(&bacc, spec.strict[rho], lam_m[rho], x, true),
                if weighted {
                    consume(&wbacc, spec.strict[rho], lam_m[rho], x, true)
                } else {
                    T::zero()
                },
            )
        };
        plain_out[x] += pre * suf;
        if let Some(w) = weighted_out.as_deref_mut() {
            w[x] += pre_w * suf + pre * suf_w
                + coef_t(rho) * cast_index::<T>(x + 1) * pre * suf;
        }
    }
}

fn check_lm_args<T: Scalar>(vectors: &[&[T]], lambda: T, l: usize) -> Result<usize> {
    if l < 2 || vectors.len() + 1 != l {
        return Err(Error::ShapeMismatch {
            context: "l-marginal arity",
            left: vectors.len() + 1,
            right: l,
        });
    }
    if l > MAX_MARGINALS {
        return Err(Error::FactorialBudget { l, max: MAX_MARGINALS });
    }
    let n = vectors[0].len();
    for v in vectors {
        if v.len() != n {
            return Err(Error::ShapeMismatch { context: "l-marginal vectors", left: v.len(), right: n });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { context: "l-marginal vectors" });
        }
    }
    if n == 0 {
        return Err(Error::ShapeMismatch { context: "l-marginal vectors", left: 0, right: 1 });
    }
    if !lambda.is_finite() || lambda <= T::zero() || lambda > T::one() {
        return Err(Error::InvalidParam { name: "lambda", value: to_f64(lambda) });
    }
    Ok(n)
}

/// `out[x] = sum over bound indices of lambda^(pairwise gaps) * prod_q
/// vectors[q][i_q]`, the kernel contraction leaving the last of `l`
/// marginals free. Costs O(l! * l * N).
pub fn ftvp_lm<T: Scalar>(vectors: &[&[T]], lambda: T, l: usize) -> Result<Vec<T>> {
    let n = check_lm_args(vectors, lambda, l)?;
    let mut out = vec![T::zero(); n];
    for spec in region_table(l)? {
        accumulate_region(&spec, vectors, lambda, &mut out, None);
    }
    Ok(out)
}

/// Cost-weighted counterpart: contraction against `C ⊙ K` with the
/// pairwise-L1 cost, the spacing `h` applied exactly once.
pub fn ftvp_lm_cost<T: Scalar>(vectors: &[&[T]], lambda: T, l: usize, h: T) -> Result<Vec<T>> {
    let n = check_lm_args(vectors, lambda, l)?;
    if !h.is_finite() || h <= T::zero() {
        return Err(Error::InvalidParam { name: "h", value: to_f64(h) });
    }
    let mut plain = vec![T::zero(); n];
    let mut weighted = vec![T::zero(); n];
    for spec in region_table(l)? {
        accumulate_region(&spec, vectors, lambda, &mut plain, Some(&mut weighted));
    }
    for w in &mut weighted {
        *w = h * *w;
    }
    Ok(weighted)
}

/// Fast Sinkhorn solve for `l >= 3` one-dimensional marginals on a shared
/// uniform grid. Marginals of unequal length fall back to the dense
/// reference iteration (subject to its element budget); the fast path
/// requires a common support size. Log-domain stabilization is not
/// available here.
pub fn fast_sinkhorn_lm<T: Scalar>(
    marginals: &[Marginal1D<T>],
    grid: &Grid1D<T>,
    config: &SinkhornConfig<T>,
) -> Result<(ScalingState<T>, SolveReport<T>)> {
    config.validate()?;
    let l = marginals.len();
    if l < 3 {
        return Err(Error::ShapeMismatch { context: "marginal count", left: l, right: 3 });
    }
    if l > MAX_MARGINALS {
        return Err(Error::FactorialBudget { l, max: MAX_MARGINALS });
    }
    if config.stabilize {
        return Err(Error::InvalidParam { name: "stabilize", value: 1.0 });
    }
    let params = KernelParams::from_grid(grid, config.epsilon)?;

    if marginals.iter().any(|m| m.len() != grid.n()) {
        // Mixed support sizes: dense fallback.
        let sizes: Vec<usize> = marginals.iter().map(|m| m.len()).collect();
        let cost = pairwise_cost_mixed(&sizes, grid.spacing())?;
        let kernel = dense_kernel_mixed(&sizes, &params)?;
        return dense_sinkhorn_general(marginals, &cost, &kernel, config);
    }

    let n = grid.n();
    let lambda = params.lambda();
    let start = Instant::now();
    let mut state = ScalingState::uniform(l, n);
    let mut residuals: Vec<T> = Vec::new();
    let mut iter_elapsed = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    // Full kernel symmetry: the contraction skipping marginal j equals the
    // last-free contraction of the remaining vectors in any order.
    let contract_skip = |state: &ScalingState<T>, j: usize| -> Result<Vec<T>> {
        let bound: Vec<&[T]> = (0..l).filter(|&q| q != j).map(|q| state.scaling(q)).collect();
        ftvp_lm(&bound, lambda, l)
    };

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

    let bound: Vec<&[T]> = (0..l - 1).map(|q| state.scaling(q)).collect();
    let weighted = ftvp_lm_cost(&bound, lambda, l, grid.spacing())?;
    let distance = state
        .scaling(l - 1)
        .iter()
        .zip(&weighted)
        .map(|(&c, &p)| c * p)
        .sum();

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
