//! Contractions and Sinkhorn driver for three marginals on a 2D grid.
//!
//! The 2D kernel is a tensor product of two 1D kernels, one per axis, with
//! decay factors `lambda_1 = exp(-h1/eps)` and `lambda_2 = exp(-h2/eps)`.
//! Fields are flattened column-major (first axis fastest); that layout is
//! normative, because the sweeps below walk columns of the second axis and
//! hand contiguous first-axis columns to the 1D kernels.
//!
//! The contraction runs the six-region prefix/suffix recursion over the
//! second axis with vector-valued accumulators, every bilinear combine
//! being one 1D sweep over the first axis; total cost O(N*M). The
//! cost-weighted product splits by axis: the cost is a sum of per-axis
//! terms, so `C ⊙ K` contracts as (axis-1 cost-weighted inner sweeps with a
//! plain outer recursion) plus (plain inner sweeps with a cost-weighted
//! outer recursion). The log-domain variants thread elementwise potential
//! ratio columns through the outer recurrences and hand per-column
//! potentials to the rescaled 1D sweeps.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::ftvp1d::FtvpWorkspace;
use crate::scalar::{cast, cast_index, to_f64, Scalar};
use crate::types::{
    Grid2D, KernelParams, Marginal2D, ResidualMode, ScalingState, SinkhornConfig, SolveReport,
};

/// Positive values on an `n x m` grid, flattened column-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Field2D<T> {
    values: Vec<T>,
    n: usize,
    m: usize,
}

impl<T: Scalar> Field2D<T> {
    pub fn from_vec(values: Vec<T>, n: usize, m: usize) -> Result<Self> {
        if values.len() != n * m || n == 0 || m == 0 {
            return Err(Error::ShapeMismatch {
                context: "field shape",
                left: values.len(),
                right: n * m,
            });
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { context: "field values" });
        }
        Ok(Self { values, n, m })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn column(&self, i2: usize) -> &[T] {
        &self.values[i2 * self.n..(i2 + 1) * self.n]
    }

    /// Transposed copy (axes swapped).
    pub fn transpose(&self) -> Self {
        let (n, m) = (self.n, self.m);
        let mut values = vec![T::zero(); n * m];
        for i2 in 0..m {
            for i1 in 0..n {
                values[i1 * m + i2] = self.values[i2 * n + i1];
            }
        }
        Self { values, n: m, m: n }
    }
}

#[inline]
fn col<T>(v: &[T], n: usize, k: usize) -> &[T] {
    &v[k * n..(k + 1) * n]
}

fn check_2d<T: Scalar>(
    phi: &[T],
    psi: &[T],
    n: usize,
    m: usize,
    lambda1: T,
    lambda2: T,
) -> Result<()> {
    if phi.len() != n * m || psi.len() != n * m || n == 0 || m == 0 {
        return Err(Error::ShapeMismatch { context: "2d field", left: phi.len(), right: n * m });
    }
    for (name, l) in [("lambda1", lambda1), ("lambda2", lambda2)] {
        if !l.is_finite() || l <= T::zero() || l > T::one() {
            return Err(Error::InvalidParam { name, value: to_f64(l) });
        }
    }
    if phi.iter().chain(psi.iter()).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite { context: "2d field values" });
    }
    Ok(())
}

/// Second-axis prefix/suffix column accumulators shared by every 2D sweep.
struct Columns<T> {
    p1: Vec<Vec<T>>,
    p2: Vec<Vec<T>>,
    p3: Vec<Vec<T>>,
    p4: Vec<Vec<T>>,
    p5: Vec<Vec<T>>,
    p6: Vec<Vec<T>>,
    q3: Vec<Vec<T>>,
    q4: Vec<Vec<T>>,
}

fn build_columns<T: Scalar>(
    phi: &[T],
    psi: &[T],
    n: usize,
    m: usize,
    lam2sq: T,
    pots: Option<(&[T], &[T], T)>, // (alpha, beta, epsilon) for ratio factors
) -> Columns<T> {
    let zero = vec![T::zero(); n];
    let mut c = Columns {
        p1: vec![zero.clone(); m],
        p2: vec![zero.clone(); m],
        p3: vec![zero.clone(); m],
        p4: vec![zero.clone(); m],
        p5: vec![zero.clone(); m],
        p6: vec![zero.clone(); m],
        q3: vec![zero.clone(); m],
        q4: vec![zero; m],
    };
    let lam4sq = lam2sq * lam2sq;
    for i in 0..n {
        c.p1[0][i] = phi[i];
        c.p2[0][i] = lam2sq * psi[i];
        c.p3[0][i] = phi[i];
        c.p4[0][i] = psi[i];
        let pl = col(phi, n, m - 1);
        let ps = col(psi, n, m - 1);
        c.q3[m - 1][i] = lam2sq * ps[i];
        c.q4[m - 1][i] = lam2sq * pl[i];
        c.p5[m - 1][i] = lam2sq * ps[i];
        c.p6[m - 1][i] = lam4sq * pl[i];
    }
    for k in 0..m - 1 {
        let t = k + 1;
        let u = m - 2 - k;
        let (pt, st) = (col(phi, n, t), col(psi, n, t));
        let (pu, su) = (col(phi, n, u), col(psi, n, u));
        match pots {
            None => {
                for i in 0..n {
                    c.p1[t][i] = lam2sq * c.p1[t - 1][i] + pt[i];
                    c.p2[t][i] = lam2sq * (c.p2[t - 1][i] + st[i]);
                    c.p3[t][i] = lam2sq * c.p3[t - 1][i] + pt[i];
                    c.p4[t][i] = lam2sq * c.p4[t - 1][i] + st[i];
                    c.q3[u][i] = lam2sq * (c.q3[u + 1][i] + su[i]);
                    c.q4[u][i] = lam2sq * (c.q4[u + 1][i] + pu[i]);
                    c.p5[u][i] = lam2sq * (c.p5[u + 1][i] + su[i]);
                    c.p6[u][i] = lam2sq * c.p6[u + 1][i] + lam4sq * pu[i];
                }
            }
            Some((alpha, beta, eps)) => {
                let (at, at1) = (col(alpha, n, t), col(alpha, n, t - 1));
                let (bt, bt1) = (col(beta, n, t), col(beta, n, t - 1));
                let (au, au1) = (col(alpha, n, u), col(alpha, n, u + 1));
                let (bu, bu1) = (col(beta, n, u), col(beta, n, u + 1));
                for i in 0..n {
                    let ra = ((at1[i] - at[i]) / eps).exp();
                    let rb = ((bt1[i] - bt[i]) / eps).exp();
                    c.p1[t][i] = lam2sq * (ra * c.p1[t - 1][i]) + pt[i];
                    c.p2[t][i] = lam2sq * (rb * c.p2[t - 1][i] + st[i]);
                    c.p3[t][i] = lam2sq * (ra * c.p3[t - 1][i]) + pt[i];
                    c.p4[t][i] = lam2sq * (rb * c.p4[t - 1][i]) + st[i];
                    let ra_b = ((au1[i] - au[i]) / eps).exp();
                    let rb_b = ((bu1[i] - bu[i]) / eps).exp();
                    c.q3[u][i] = lam2sq * (rb_b * c.q3[u + 1][i] + su[i]);
                    c.q4[u][i] = lam2sq * (ra_b * c.q4[u + 1][i] + pu[i]);
                    c.p5[u][i] = lam2sq * (rb_b * c.p5[u + 1][i] + su[i]);
                    c.p6[u][i] = lam2sq * (ra_b * c.p6[u + 1][i]) + lam4sq * pu[i];
                }
            }
        }
    }
    c
}

/// Weighted second-axis accumulators for the cost-along-axis-2 term.
struct WeightedColumns<T> {
    r1: Vec<Vec<T>>,
    r2: Vec<Vec<T>>,
    r3: Vec<Vec<T>>,
    r4: Vec<Vec<T>>,
    r5: Vec<Vec<T>>,
    r6: Vec<Vec<T>>,
    s3: Vec<Vec<T>>,
    s4: Vec<Vec<T>>,
}

fn build_weighted_columns<T: Scalar>(
    phi: &[T],
    psi: &[T],
    n: usize,
    m: usize,
    lam2sq: T,
    pots: Option<(&[T], &[T], T)>,
) -> WeightedColumns<T> {
    let zero = vec![T::zero(); n];
    let mut c = WeightedColumns {
        r1: vec![zero.clone(); m],
        r2: vec![zero.clone(); m],
        r3: vec![zero.clone(); m],
        r4: vec![zero.clone(); m],
        r5: vec![zero.clone(); m],
        r6: vec![zero.clone(); m],
        s3: vec![zero.clone(); m],
        s4: vec![zero; m],
    };
    let lam4sq = lam2sq * lam2sq;
    let two = cast::<T>(2.0);
    let big = cast_index::<T>(2 * m);
    for i in 0..n {
        c.r1[0][i] = -(two * phi[i]);
        c.r2[0][i] = -(two * lam2sq * psi[i]);
        c.r3[0][i] = -(two * phi[i]);
        c.r4[0][i] = -(two * psi[i]);
        let pl = col(phi, n, m - 1);
        let ps = col(psi, n, m - 1);
        c.s3[m - 1][i] = big * lam2sq * ps[i];
        c.s4[m - 1][i] = big * lam2sq * pl[i];
        c.r5[m - 1][i] = big * lam2sq * ps[i];
        c.r6[m - 1][i] = big * lam4sq * pl[i];
    }
    for k in 0..m - 1 {
        let t = k + 1;
        let u = m - 2 - k;
        let cf = cast_index::<T>(2 * (t + 1));
        let cb = cast_index::<T>(2 * (u + 1));
        let (pt, st) = (col(phi, n, t), col(psi, n, t));
        let (pu, su) = (col(phi, n, u), col(psi, n, u));
        match pots {
            None => {
                for i in 0..n {
                    c.r1[t][i] = lam2sq * c.r1[t - 1][i] - cf * pt[i];
                    c.r2[t][i] = lam2sq * (c.r2[t - 1][i] - cf * st[i]);
                    c.r3[t][i] = lam2sq * c.r3[t - 1][i] - cf * pt[i];
                    c.r4[t][i] = lam2sq * c.r4[t - 1][i] - cf * st[i];
                    c.s3[u][i] = lam2sq * (c.s3[u + 1][i] + cb * su[i]);
                    c.s4[u][i] = lam2sq * (c.s4[u + 1][i] + cb * pu[i]);
                    c.r5[u][i] = lam2sq * (c.r5[u + 1][i] + cb * su[i]);
                    c.r6[u][i] = lam2sq * (c.r6[u + 1][i] + cb * lam2sq * pu[i]);
                }
            }
            Some((alpha, beta, eps)) => {
                let (at, at1) = (col(alpha, n, t), col(alpha, n, t - 1));
                let (bt, bt1) = (col(beta, n, t), col(beta, n, t - 1));
                let (au, au1) = (col(alpha, n, u), col(alpha, n, u + 1));
                let (bu, bu1) = (col(beta, n, u), col(beta, n, u + 1));
                for i in 0..n {
                    let ra = ((at1[i] - at[i]) / eps).exp();
                    let rb = ((bt1[i] - bt[i]) / eps).exp();
                    c.r1[t][i] = lam2sq * (ra * c.r1[t - 1][i]) - cf * pt[i];
                    c.r2[t][i] = lam2sq * (rb * c.r2[t - 1][i] - cf * st[i]);
                    c.r3[t][i] = lam2sq * (ra * c.r3[t - 1][i]) - cf * pt[i];
                    c.r4[t][i] = lam2sq * (rb * c.r4[t - 1][i]) - cf * st[i];
                    let ra_b = ((au1[i] - au[i]) / eps).exp();
                    let rb_b = ((bu1[i] - bu[i]) / eps).exp();
                    c.s3[u][i] = lam2sq * (rb_b * c.s3[u + 1][i] + cb * su[i]);
                    c.s4[u][i] = lam2sq * (ra_b * c.s4[u + 1][i] + cb * pu[i]);
                    c.r5[u][i] = lam2sq * (rb_b * c.r5[u + 1][i] + cb * su[i]);
                    c.r6[u][i] = lam2sq * (ra_b * c.r6[u + 1][i] + cb * lam2sq * pu[i]);
                }
            }
        }
    }
    c
}

/// How the per-column inner 1D sweep is evaluated.
enum Inner<'a, T> {
    Plain,
    CostWeighted { h1: T },
    Log { alpha: &'a [T], beta: &'a [T], gamma: &'a [T], epsilon: T },
    CostWeightedLog { alpha: &'a [T], beta: &'a [T], gamma: &'a [T], epsilon: T, h1: T },
}

/// One inner 1D contraction of two first-axis columns; `(ka, kb, kg)` pick
/// the potential anchor columns of the phi side, psi side, and output.
#[allow(clippy::too_many_arguments)]
fn inner_call<T: Scalar>(
    ws: &mut FtvpWorkspace<T>,
    inner: &Inner<'_, T>,
    n: usize,
    a: &[T],
    b: &[T],
    lambda1: T,
    anchors: (usize, usize, usize),
    out: &mut Vec<T>,
) -> Result<()> {
    let (ka, kb, kg) = anchors;
    match inner {
        Inner::Plain => ws.ftvp1_into(a, b, lambda1, out),
        Inner::CostWeighted { h1 } => ws.ftvp2_into(a, b, lambda1, *h1, out),
        Inner::Log { alpha, beta, gamma, epsilon } => ws.ftvp_log_into(
            a,
            b,
            col(alpha, n, ka),
            col(beta, n, kb),
            col(gamma, n, kg),
            lambda1,
            *epsilon,
            out,
        ),
        Inner::CostWeightedLog { alpha, beta, gamma, epsilon, h1 } => ws.ftvp2_log_into(
            a,
            b,
            col(alpha, n, ka),
            col(beta, n, kb),
            col(gamma, n, kg),
            lambda1,
            *epsilon,
            *h1,
            out,
        ),
    }
}

/// Carry-ratio column of the output potential between consecutive columns,
/// all ones in the plain case.
fn gamma_ratio<T: Scalar>(
    pots: Option<(&[T], T)>,
    n: usize,
    from: usize,
    to: usize,
    buf: &mut Vec<T>,
) {
    buf.clear();
    match pots {
        None => buf.resize(n, T::one()),
        Some((gamma, eps)) => {
            let (gf, gt) = (col(gamma, n, from), col(gamma, n, to));
            buf.extend((0..n).map(|i| ((gt[i] - gf[i]) / eps).exp()));
        }
    }
}

/// Shared outer recursion: runs the six second-axis region sweeps with the
/// given inner evaluation and adds the results into `out`.
#[allow(clippy::too_many_arguments)]
fn outer_sweep<T: Scalar>(
    phi: &[T],
    psi: &[T],
    n: usize,
    m: usize,
    lambda1: T,
    lam2sq: T,
    cols: &Columns<T>,
    inner: &Inner<'_, T>,
    gamma_pots: Option<(&[T], T)>,
    out: &mut [T],
) -> Result<()> {
    let mut ws = FtvpWorkspace::new();
    let mut tmp = Vec::new();
    let mut ratio = Vec::new();

    // Regions 1 and 2: forward carries.
    let mut j1 = vec![T::zero(); n];
    let mut j2 = vec![T::zero(); n];
    inner_call(&mut ws, inner, n, col(phi, n, 0), col(psi, n, 0), lambda1, (0, 0, 0), &mut tmp)?;
    j1.copy_from_slice(&tmp);
    for i in 0..n {
        out[i] += j1[i];
    }
    for k in 1..m {
        gamma_ratio(gamma_pots, n, k - 1, k, &mut ratio);
        inner_call(&mut ws, inner, n, &cols.p1[k], col(psi, n, k), lambda1, (k, k, k), &mut tmp)?;
        for i in 0..n {
            j1[i] = lam2sq * (ratio[i] * j1[i]) + tmp[i];
        }
        inner_call(&mut ws, inner, n, col(phi, n, k), &cols.p2[k - 1], lambda1, (k, k - 1, k), &mut tmp)?;
        for i in 0..n {
            j2[i] = lam2sq * (ratio[i] * j2[i]) + tmp[i];
        }
        let o = &mut out[k * n..(k + 1) * n];
        for i in 0..n {
            o[i] += j1[i] + j2[i];
        }
    }

    // Regions 3 and 4: direct prefix-suffix products per column.
    for k in 0..m - 1 {
        inner_call(&mut ws, inner, n, &cols.p3[k], &cols.q3[k + 1], lambda1, (k, k + 1, k), &mut tmp)?;
        let o = &mut out[k * n..(k + 1) * n];
        for i in 0..n {
            o[i] += tmp[i];
        }
        inner_call(&mut ws, inner, n, &cols.q4[k + 1], &cols.p4[k], lambda1, (k + 1, k, k), &mut tmp)?;
        let o = &mut out[k * n..(k + 1) * n];
        for i in 0..n {
            o[i] += tmp[i];
        }
    }

    // Region 5: backward carry.
    let mut j5 = vec![T::zero(); n];
    for s in (1..m).rev() {
        gamma_ratio(gamma_pots, n, s, s - 1, &mut ratio);
        inner_call(&mut ws, inner, n, col(phi, n, s), &cols.p5[s], lambda1, (s, s, s - 1), &mut tmp)?;
        for i in 0..n {
            j5[i] = lam2sq * (ratio[i] * j5[i]) + tmp[i];
        }
        let o = &mut out[(s - 1) * n..s * n];
        for i in 0..n {
            o[i] += j5[i];
        }
    }

    // Region 6: backward carry with a two-column offset.
    let mut j6 = vec![T::zero(); n];
    for s in (1..m.saturating_sub(1)).rev() {
        gamma_ratio(gamma_pots, n, s, s - 1, &mut ratio);
        inner_call(&mut ws, inner, n, &cols.p6[s + 1], col(psi, n, s), lambda1, (s + 1, s, s - 1), &mut tmp)?;
        for i in 0..n {
            j6[i] = lam2sq * (ratio[i] * j6[i]) + tmp[i];
        }
        let o = &mut out[(s - 1) * n..s * n];
        for i in 0..n {
            o[i] += j6[i];
        }
    }
    Ok(())
}

/// Cost-along-axis-2 outer recursion: the second-axis analog of the 1D
/// cost-weighted sweep, with plain (or log) inner sweeps. Adds
/// contributions into `out` (caller applies `h2`).
#[allow(clippy::too_many_arguments)]
fn outer_sweep_weighted<T: Scalar>(
    phi: &[T],
    psi: &[T],
    n: usize,
    m: usize,
    lambda1: T,
    lam2sq: T,
    cols: &Columns<T>,
    wcols: &WeightedColumns<T>,
    inner: &Inner<'_, T>,
    gamma_pots: Option<(&[T], T)>,
    out: &mut [T],
) -> Result<()> {
    let mut ws = FtvpWorkspace::new();
    let mut tmp = Vec::new();
    let mut ratio = Vec::new();
    let mut comb = vec![T::zero(); n];
    let two = cast::<T>(2.0);

    // Regions 1 and 2: forward weighted carries alongside the plain ones.
    let mut j1 = vec![T::zero(); n];
    let mut j2 = vec![T::zero(); n];
    let mut b1 = vec![T::zero(); n];
    let mut b2 = vec![T::zero(); n];
    inner_call(&mut ws, inner, n, col(phi, n, 0), col(psi, n, 0), lambda1, (0, 0, 0), &mut tmp)?;
    j1.copy_from_slice(&tmp);
    for k in 1..m {
        let cf = cast_index::<T>(2 * (k + 1));
        gamma_ratio(gamma_pots, n, k - 1, k, &mut ratio);
        for i in 0..n {
            comb[i] = wcols.r1[k][i] + cf * cols.p1[k][i];
        }
        inner_call(&mut ws, inner, n, &comb, col(psi, n, k), lambda1, (k, k, k), &mut tmp)?;
        for i in 0..n {
            b1[i] = lam2sq * (ratio[i] * (b1[i] + two * j1[i])) + tmp[i];
        }
        for i in 0..n {
            comb[i] = wcols.r2[k - 1][i] + cf * cols.p2[k - 1][i];
        }
        inner_call(&mut ws, inner, n, col(phi, n, k), &comb, lambda1, (k, k - 1, k), &mut tmp)?;
        for i in 0..n {
            b2[i] = lam2sq * (ratio[i] * (b2[i] + two * j2[i])) + tmp[i];
        }
        // Advance the plain carries after the weighted ones consumed them.
        inner_call(&mut ws, inner, n, &cols.p1[k], col(psi, n, k), lambda1, (k, k, k), &mut tmp)?;
        for i in 0..n {
            j1[i] = lam2sq * (ratio[i] * j1[i]) + tmp[i];
        }
        inner_call(&mut ws, inner, n, col(phi, n, k), &cols.p2[k - 1], lambda1, (k, k - 1, k), &mut tmp)?;
        for i in 0..n {
            j2[i] = lam2sq * (ratio[i] * j2[i]) + tmp[i];
        }
        let o = &mut out[k * n..(k + 1) * n];
        for i in 0..n {
            o[i] += b1[i] + b2[i];
        }
    }

    // Regions 3 and 4: R*Q + P*S per column.
    for k in 0..m - 1 {
        let o_start = k * n;
        inner_call(&mut ws, inner, n, &wcols.r3[k], &cols.q3[k + 1], lambda1, (k, k + 1, k), &mut tmp)?;
        for i in 0..n {
            out[o_start + i] += tmp[i];
        }
        inner_call(&mut ws, inner, n, &cols.p3[k], &wcols.s3[k + 1], lambda1, (k, k + 1, k), &mut tmp)?;
        for i in 0..n {
            out[o_start + i] += tmp[i];
        }
        inner_call(&mut ws, inner, n, &cols.q4[k + 1], &wcols.r4[k], lambda1, (k + 1, k, k), &mut tmp)?;
        for i in 0..n {
            out[o_start + i] += tmp[i];
        }
        inner_call(&mut ws, inner, n, &wcols.s4[k + 1], &cols.p4[k], lambda1, (k + 1, k, k), &mut tmp)?;
        for i in 0..n {
            out[o_start + i] += tmp[i];
        }
    }

    // Region 5.
    let mut j5 = vec![T::zero(); n];
    let mut b5 = vec![T::zero(); n];
    for s in (1..m).rev() {
        let cb = cast_index::<T>(2 * s);
        gamma_ratio(gamma_pots, n, s, s - 1, &mut ratio);
        for i in 0..n {
            comb[i] = wcols.r5[s][i] - cb * cols.p5[s][i];
        }
        inner_call(&mut ws, inner, n, col(phi, n, s), &comb, lambda1, (s, s, s - 1), &mut tmp)?;
        for i in 0..n {
            b5[i] = lam2sq * (ratio[i] * (b5[i] + two * j5[i])) + tmp[i];
        }
        inner_call(&mut ws, inner, n, col(phi, n, s), &cols.p5[s], lambda1, (s, s, s - 1), &mut tmp)?;
        for i in 0..n {
            j5[i] = lam2sq * (ratio[i] * j5[i]) + tmp[i];
        }
        let o = &mut out[(s - 1) * n..s * n];
        for i in 0..n {
            o[i] += b5[i];
        }
    }

    // Region 6.
    let mut j6 = vec![T::zero(); n];
    let mut b6 = vec![T::zero(); n];
    for s in (1..m.saturating_sub(1)).rev() {
        let cb = cast_index::<T>(2 * s);
        gamma_ratio(gamma_pots, n, s, s - 1, &mut ratio);
        for i in 0..n {
            comb[i] = wcols.r6[s + 1][i] - cb * cols.p6[s + 1][i];
        }
        inner_call(&mut ws, inner, n, &comb, col(psi, n, s), lambda1, (s + 1, s, s - 1), &mut tmp)?;
        for i in 0..n {
            b6[i] = lam2sq * (ratio[i] * (b6[i] + two * j6[i])) + tmp[i];
        }
        inner_call(&mut ws, inner, n, &cols.p6[s + 1], col(psi, n, s), lambda1, (s + 1, s, s - 1), &mut tmp)?;
        for i in 0..n {
            j6[i] = lam2sq * (ratio[i] * j6[i]) + tmp[i];
        }
        let o = &mut out[(s - 1) * n..s * n];
        for i in 0..n {
            o[i] += b6[i];
        }
    }
    Ok(())
}

pub(crate) fn ftvp2d_1_flat<T: Scalar>(
    phi: &[T],
    psi: &[T],
    n: usize,
    m: usize,
    lambda1: T,
    lambda2: T,
) -> Result<Vec<T>> {
    check_2d(phi, psi, n, m, lambda1, lambda2)?;
    let lam2sq = lambda2 * lambda2;
    let cols = build_columns(phi, psi, n, m, lam2sq, None);
    let mut out = vec![T::zero(); n * m];
    outer_sweep(phi, psi, n, m, lambda1, lam2sq, &cols, &Inner::Plain, None, &mut out)?;
    Ok(out)
}

pub(crate) fn ftvp2d_2_flat<T: Scalar>(
    phi: &[T],
    psi: &[T],
    n: usize,
    m: usize,
    lambda1: T,
    lambda2: T,
    h1: T,
    h2: T,
) -> Result<Vec<T>> {
    check_2d(phi, psi, n, m, lambda1, lambda2)?;
    for (name, h) in [("h1", h1), ("h2", h2)] {
        if !h.is_finite() || h <= T::zero() {
            return Err(Error::InvalidParam { name, value: to_f64(h) });
        }
    }
    let lam2sq = lambda2 * lambda2;
    let cols = build_columns(phi, psi, n, m, lam2sq, None);
    let wcols = build_weighted_columns(phi, psi, n, m, lam2sq, None);
    // Axis-1 cost: plain outer recursion, cost-weighted inner sweeps.
    let mut out = vec![T::zero(); n * m];
    outer_sweep(
        phi,
        psi,
        n,
        m,
        lambda1,
        lam2sq,
        &cols,
        &Inner::CostWeighted { h1 },
        None,
        &mut out,
    )?;
    // Axis-2 cost: weighted outer recursion, plain inner sweeps.
    let mut out2 = vec![T::zero(); n * m];
    outer_sweep_weighted(
        phi,
        psi,
        n,
        m,
        lambda1,
        lam2sq,
        &cols,
        &wcols,
        &Inner::Plain,
        None,
        &mut out2,
    )?;
    for (o, w) in out.iter_mut().zip(&out2) {
        *o = *o + h2 * *w;
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn ftvp2d_log_flat<T: Scalar>(
    phi: &[T],
    psi: &[T],
    alpha: &[T],
    beta: &[T],
    gamma: &[T],
    n: usize,
    m: usize,
    lambda1: T,
    lambda2: T,
    epsilon: T,
) -> Result<Vec<T>> {
    check_2d(phi, psi, n, m, lambda1, lambda2)?;
    let lam2sq = lambda2 * lambda2;
    let cols = build_columns(phi, psi, n, m, lam2sq, Some((alpha, beta, epsilon)));
    let mut out = vec![T::zero(); n * m];
    outer_sweep(
        phi,
        psi,
        n,
        m,
        lambda1,
        lam2sq,
        &cols,
        &Inner::Log { alpha, beta, gamma, epsilon },
        Some((gamma, epsilon)),
        &mut out,
    )?;
    if out.iter().any(|x| !x.is_finite()) {
        return Err(Error::NumericalOverflow { iteration: 0, residuals: Vec::new() });
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn ftvp2d_2_log_flat<T: Scalar>(
    phi: &[T],
    psi: &[T],
    alpha: &[T],
    beta: &[T],
    gamma: &[T],
    n: usize,
    m: usize,
    lambda1: T,
    lambda2: T,
    epsilon: T,
    h1: T,
    h2: T,
) -> Result<Vec<T>> {
    check_2d(phi, psi, n, m, lambda1, lambda2)?;
    let lam2sq = lambda2 * lambda2;
    let pots = Some((alpha, beta, epsilon));
    let cols = build_columns(phi, psi, n, m, lam2sq, pots);
    let wcols = build_weighted_columns(phi, psi, n, m, lam2sq, pots);
    let mut out = vec![T::zero(); n * m];
    outer_sweep(
        phi,
        psi,
        n,
        m,
        lambda1,
        lam2sq,
        &cols,
        &Inner::CostWeightedLog { alpha, beta, gamma, epsilon, h1 },
        Some((gamma, epsilon)),
        &mut out,
    )?;
    let mut out2 = vec![T::zero(); n * m];
    outer_sweep_weighted(
        phi,
        psi,
        n,
        m,
        lambda1,
        lam2sq,
        &cols,
        &wcols,
        &Inner::Log { alpha, beta, gamma, epsilon },
        Some((gamma, epsilon)),
        &mut out2,
    )?;
    for (o, w) in out.iter_mut().zip(&out2) {
        *o = *o + h2 * *w;
    }
    if out.iter().any(|x| !x.is_finite()) {
        return Err(Error::NumericalOverflow { iteration: 0, residuals: Vec::new() });
    }
    Ok(out)
}

/// `J_{k1 k2} = sum over (i1 i2), (j1 j2) of K * phi * psi`, the plain 2D
/// kernel contraction. Cost O(N * M).
pub fn ftvp2d_1<T: Scalar>(
    phi: &Field2D<T>,
    psi: &Field2D<T>,
    lambda1: T,
    lambda2: T,
) -> Result<Field2D<T>> {
    if phi.n != psi.n || phi.m != psi.m {
        return Err(Error::ShapeMismatch {
            context: "2d field shapes",
            left: phi.values.len(),
            right: psi.values.len(),
        });
    }
    let out = ftvp2d_1_flat(&phi.values, &psi.values, phi.n, phi.m, lambda1, lambda2)?;
    Field2D::from_vec(out, phi.n, phi.m)
}

/// Cost-weighted 2D contraction against `C ⊙ K`, where the cost adds the
/// two per-axis pairwise-L1 terms scaled by `h1` and `h2`. Each spacing is
/// applied exactly once.
pub fn ftvp2d_2<T: Scalar>(
    phi: &Field2D<T>,
    psi: &Field2D<T>,
    lambda1: T,
    lambda2: T,
    h1: T,
    h2: T,
) -> Result<Field2D<T>> {
    if phi.n != psi.n || phi.m != psi.m {
        return Err(Error::ShapeMismatch {
            context: "2d field shapes",
            left: phi.values.len(),
            right: psi.values.len(),
        });
    }
    let out = ftvp2d_2_flat(&phi.values, &psi.values, phi.n, phi.m, lambda1, lambda2, h1, h2)?;
    Field2D::from_vec(out, phi.n, phi.m)
}

/// Log-domain rescaled 2D contraction (potentials are fields of the same
/// shape).
#[allow(clippy::too_many_arguments)]
pub fn ftvp2d_log<T: Scalar>(
    phi: &Field2D<T>,
    psi: &Field2D<T>,
    alpha: &Field2D<T>,
    beta: &Field2D<T>,
    gamma: &Field2D<T>,
    lambda1: T,
    lambda2: T,
    epsilon: T,
) -> Result<Field2D<T>> {
    let out = ftvp2d_log_flat(
        &phi.values,
        &psi.values,
        &alpha.values,
        &beta.values,
        &gamma.values,
        phi.n,
        phi.m,
        lambda1,
        lambda2,
        epsilon,
    )?;
    Field2D::from_vec(out, phi.n, phi.m)
}

/// Cost-weighted log-domain 2D contraction.
#[allow(clippy::too_many_arguments)]
pub fn ftvp2d_2_log<T: Scalar>(
    phi: &Field2D<T>,
    psi: &Field2D<T>,
    alpha: &Field2D<T>,
    beta: &Field2D<T>,
    gamma: &Field2D<T>,
    lambda1: T,
    lambda2: T,
    epsilon: T,
    h1: T,
    h2: T,
) -> Result<Field2D<T>> {
    let out = ftvp2d_2_log_flat(
        &phi.values,
        &psi.values,
        &alpha.values,
        &beta.values,
        &gamma.values,
        phi.n,
        phi.m,
        lambda1,
        lambda2,
        epsilon,
        h1,
        h2,
    )?;
    Field2D::from_vec(out, phi.n, phi.m)
}

/// Fast Sinkhorn solve for three marginals on a shared 2D grid, with the
/// same update order, residual convention, and stabilization behavior as
/// the 1D driver. One iteration costs O(N * M).
pub fn fast_sinkhorn_2d<T: Scalar>(
    u: &Marginal2D<T>,
    v: &Marginal2D<T>,
    w: &Marginal2D<T>,
    config: &SinkhornConfig<T>,
) -> Result<(ScalingState<T>, SolveReport<T>)> {
    config.validate()?;
    if u.grid() != v.grid() || u.grid() != w.grid() {
        return Err(Error::ShapeMismatch {
            context: "2d marginal grids",
            left: u.weights().len(),
            right: w.weights().len(),
        });
    }
    let grid: &Grid2D<T> = u.grid();
    let (n, m) = (grid.n(), grid.m());
    let lambda1 = KernelParams::new(grid.h1(), config.epsilon)?.lambda();
    let lambda2 = KernelParams::new(grid.h2(), config.epsilon)?.lambda();
    let marginals = [u.weights(), v.weights(), w.weights()];
    let eps = config.epsilon;

    let start = Instant::now();
    let mut state = ScalingState::uniform(3, n * m);
    let mut residuals: Vec<T> = Vec::new();
    let mut iter_elapsed = Vec::new();
    let mut absorptions = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    let overflow = |iterations: usize, residuals: &[T]| Error::NumericalOverflow {
        iteration: iterations,
        residuals: residuals.iter().map(|&r| to_f64(r)).collect(),
    };

    while iterations < config.itr_max {
        iterations += 1;
        let log_domain = config.stabilize && state.has_potentials();
        for j in 0..3 {
            let (a, b) = match j {
                0 => (1, 2),
                1 => (0, 2),
                _ => (0, 1),
            };
            let denom = if log_domain {
                ftvp2d_log_flat(
                    state.scaling(a),
                    state.scaling(b),
                    state.potential(a),
                    state.potential(b),
                    state.potential(j),
                    n,
                    m,
                    lambda1,
                    lambda2,
                    eps,
                )
            } else {
                ftvp2d_1_flat(state.scaling(a), state.scaling(b), n, m, lambda1, lambda2)
            };
            let denom = match denom {
                Ok(d) => d,
                Err(Error::NumericalOverflow { .. }) => {
                    return Err(overflow(iterations, &residuals))
                }
                Err(e) => return Err(e),
            };
            let s = &mut state.scalings[j];
            for ((x, &mass), &d) in s.iter_mut().zip(marginals[j]).zip(&denom) {
                *x = mass / d;
            }
            if s.iter().any(|x| !x.is_finite()) {
                return Err(overflow(iterations, &residuals));
            }
        }

        let checked = match config.residual_mode {
            ResidualMode::Partial => 2,
            ResidualMode::Full => 3,
        };
        let mut res = T::zero();
        for j in 0..checked {
            let (a, b) = match j {
                0 => (1, 2),
                1 => (0, 2),
                _ => (0, 1),
            };
            let prod = if log_domain {
                ftvp2d_log_flat(
                    state.scaling(a),
                    state.scaling(b),
                    state.potential(a),
                    state.potential(b),
                    state.potential(j),
                    n,
                    m,
                    lambda1,
                    lambda2,
                    eps,
                )
            } else {
                ftvp2d_1_flat(state.scaling(a), state.scaling(b), n, m, lambda1, lambda2)
            };
            let prod = match prod {
                Ok(p) => p,
                Err(Error::NumericalOverflow { .. }) => {
                    return Err(overflow(iterations, &residuals))
                }
                Err(e) => return Err(e),
            };
            for ((&x, &mass), &d) in state.scaling(j).iter().zip(marginals[j]).zip(&prod) {
                res += (x * d - mass).abs();
            }
        }
        if !res.is_finite() {
            return Err(overflow(iterations, &residuals));
        }
        residuals.push(res);
        iter_elapsed.push(start.elapsed().as_secs_f64());

        let mut absorbed = 0;
        if config.stabilize && state.max_scaling() > config.tau {
            state.absorb(eps);
            absorbed = 1;
        }
        absorptions.push(absorbed);

        if res <= config.tol {
            converged = true;
            break;
        }
    }

    let weighted = if state.has_potentials() {
        ftvp2d_2_log_flat(
            state.scaling(0),
            state.scaling(1),
            state.potential(0),
            state.potential(1),
            state.potential(2),
            n,
            m,
            lambda1,
            lambda2,
            eps,
            grid.h1(),
            grid.h2(),
        )?
    } else {
        ftvp2d_2_flat(
            state.scaling(0),
            state.scaling(1),
            n,
            m,
            lambda1,
            lambda2,
            grid.h1(),
            grid.h2(),
        )?
    };
    let distance = state
        .scaling(2)
        .iter()
        .zip(&weighted)
        .map(|(&c, &p)| c * p)
        .sum();

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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ftvp1d::{ftvp1, ftvp2};
    use crate::oracle::{dense_plan, dense_sinkhorn_2d};
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn positive_vec(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen::<f64>() + 0.05).collect()
    }

    fn field(n: usize, m: usize, seed: u64) -> Field2D<f64> {
        Field2D::from_vec(positive_vec(n * m, seed), n, m).unwrap()
    }

    /// Independent brute-force 2D contraction: six nested loops over the
    /// absolute-value exponents, optional cost weighting and rescaling.
    #[allow(clippy::too_many_arguments)]
    fn brute_2d(
        phi: &Field2D<f64>,
        psi: &Field2D<f64>,
        l1: f64,
        l2: f64,
        cost: Option<(f64, f64)>,
        pots: Option<(&Field2D<f64>, &Field2D<f64>, &Field2D<f64>, f64)>,
    ) -> Field2D<f64> {
        let (n, m) = (phi.n(), phi.m());
        let mut out = vec![0.0; n * m];
        let gaps = |a: usize, b: usize, c: usize| -> i64 {
            let (a, b, c) = (a as i64, b as i64, c as i64);
            (a - b).abs() + (a - c).abs() + (b - c).abs()
        };
        for k2 in 0..m {
            for k1 in 0..n {
                let mut total = 0.0;
                for i2 in 0..m {
                    for i1 in 0..n {
                        for j2 in 0..m {
                            for j1 in 0..n {
                                let e1 = gaps(i1, j1, k1);
                                let e2 = gaps(i2, j2, k2);
                                let mut term = l1.powi(e1 as i32)
                                    * l2.powi(e2 as i32)
                                    * phi.values()[i2 * n + i1]
                                    * psi.values()[j2 * n + j1];
                                if let Some((h1, h2)) = cost {
                                    term *= h1 * e1 as f64 + h2 * e2 as f64;
                                }
                                if let Some((al, be, ga, eps)) = pots {
                                    term *= ((al.values()[i2 * n + i1]
                                        + be.values()[j2 * n + j1]
                                        + ga.values()[k2 * n + k1])
                                        / eps)
                                        .exp();
                                }
                                total += term;
                            }
                        }
                    }
                }
                out[k2 * n + k1] = total;
            }
        }
        Field2D::from_vec(out, n, m).unwrap()
    }

    fn assert_close(got: &Field2D<f64>, expect: &Field2D<f64>, tol: f64) {
        for (g, e) in got.values().iter().zip(expect.values()) {
            assert!(
                (g - e).abs() <= tol * e.abs().max(1e-30),
                "{g} vs {e} (tol {tol})"
            );
        }
    }

    #[test]
    fn single_cell() {
        let phi = Field2D::from_vec(vec![3.0], 1, 1).unwrap();
        let psi = Field2D::from_vec(vec![4.0], 1, 1).unwrap();
        let out = ftvp2d_1(&phi, &psi, 0.5, 0.5).unwrap();
        assert_eq!(out.values(), &[12.0]);
        let out = ftvp2d_2(&phi, &psi, 0.5, 0.5, 1.0, 1.0).unwrap();
        assert_eq!(out.values(), &[0.0]);
    }

    #[test]
    fn lambda_one_is_separable() {
        let phi = field(3, 4, 1);
        let psi = field(3, 4, 2);
        let expect: f64 =
            phi.values().iter().sum::<f64>() * psi.values().iter().sum::<f64>();
        let out = ftvp2d_1(&phi, &psi, 1.0, 1.0).unwrap();
        for &o in out.values() {
            assert!((o - expect).abs() <= 1e-12 * expect);
        }
    }

    #[test]
    fn matches_brute_force_square_and_rectangular() {
        for (n, m, seed) in [(3, 3, 10), (2, 4, 20), (4, 2, 30), (1, 3, 40), (3, 1, 50)] {
            let phi = field(n, m, seed);
            let psi = field(n, m, seed + 1);
            let (l1, l2) = (0.55, 0.35);
            let got = ftvp2d_1(&phi, &psi, l1, l2).unwrap();
            let expect = brute_2d(&phi, &psi, l1, l2, None, None);
            assert_close(&got, &expect, 1e-10);
        }
    }

    #[test]
    fn cost_weighted_matches_brute_force() {
        for (n, m, seed) in [(3, 3, 60), (2, 4, 70), (4, 2, 80), (1, 3, 90), (3, 1, 95)] {
            let phi = field(n, m, seed);
            let psi = field(n, m, seed + 1);
            let (l1, l2) = (0.45, 0.65);
            let (h1, h2) = (0.3, 0.7);
            let got = ftvp2d_2(&phi, &psi, l1, l2, h1, h2).unwrap();
            let expect = brute_2d(&phi, &psi, l1, l2, Some((h1, h2)), None);
            assert_close(&got, &expect, 1e-10);
        }
    }

    #[test]
    fn single_column_reduces_to_axis1_kernels() {
        let n = 6;
        let phi = field(n, 1, 100);
        let psi = field(n, 1, 101);
        let out = ftvp2d_1(&phi, &psi, 0.5, 1.0).unwrap();
        let expect = ftvp1(phi.column(0), psi.column(0), 0.5).unwrap();
        for (g, e) in out.values().iter().zip(&expect) {
            assert!((g - e).abs() <= 1e-12 * e.abs());
        }
        let out = ftvp2d_2(&phi, &psi, 0.5, 1.0, 0.25, 1.0).unwrap();
        let expect = ftvp2(phi.column(0), psi.column(0), 0.5, 0.25).unwrap();
        for (g, e) in out.values().iter().zip(&expect) {
            assert!((g - e).abs() <= 1e-10 * e.abs().max(1e-30));
        }
    }

    #[test]
    fn axis_symmetry_under_transpose() {
        let phi = field(3, 5, 110);
        let psi = field(3, 5, 111);
        let (l1, l2) = (0.4, 0.7);
        let direct = ftvp2d_1(&phi, &psi, l1, l2).unwrap();
        let swapped = ftvp2d_1(&phi.transpose(), &psi.transpose(), l2, l1).unwrap();
        assert_close(&direct, &swapped.transpose(), 1e-12);

        let (h1, h2) = (0.2, 0.9);
        let direct = ftvp2d_2(&phi, &psi, l1, l2, h1, h2).unwrap();
        let swapped = ftvp2d_2(&phi.transpose(), &psi.transpose(), l2, l1, h2, h1).unwrap();
        assert_close(&direct, &swapped.transpose(), 1e-12);
    }

    #[test]
    fn rank_one_fields_factor_into_1d_products() {
        let (n, m) = (4, 5);
        let a = positive_vec(n, 120);
        let b = positive_vec(m, 121);
        let c = positive_vec(n, 122);
        let d = positive_vec(m, 123);
        let outer = |x: &[f64], y: &[f64]| -> Field2D<f64> {
            let mut v = vec![0.0; n * m];
            for (i2, &yy) in y.iter().enumerate() {
                for (i1, &xx) in x.iter().enumerate() {
                    v[i2 * n + i1] = xx * yy;
                }
            }
            Field2D::from_vec(v, n, m).unwrap()
        };
        let phi = outer(&a, &b);
        let psi = outer(&c, &d);
        let (l1, l2) = (0.6, 0.3);
        let got = ftvp2d_1(&phi, &psi, l1, l2).unwrap();
        let f1 = ftvp1(&a, &c, l1).unwrap();
        let f2 = ftvp1(&b, &d, l2).unwrap();
        let expect = outer(&f1, &f2);
        assert_close(&got, &expect, 1e-10);
    }

    #[test]
    fn log_zero_potentials_is_bitwise_plain() {
        let phi = field(4, 3, 130);
        let psi = field(4, 3, 131);
        let zero = Field2D::from_vec(vec![0.0; 12], 4, 3).unwrap();
        let plain = ftvp2d_1(&phi, &psi, 0.5, 0.6).unwrap();
        let logd = ftvp2d_log(&phi, &psi, &zero, &zero, &zero, 0.5, 0.6, 0.1).unwrap();
        assert_eq!(plain.values(), logd.values());

        let plain = ftvp2d_2(&phi, &psi, 0.5, 0.6, 0.3, 0.4).unwrap();
        let logd =
            ftvp2d_2_log(&phi, &psi, &zero, &zero, &zero, 0.5, 0.6, 0.1, 0.3, 0.4).unwrap();
        assert_eq!(plain.values(), logd.values());
    }

    #[test]
    fn log_variants_match_rescaled_brute_force() {
        let (n, m) = (3, 3);
        let phi = field(n, m, 140);
        let psi = field(n, m, 141);
        let mk_pot = |seed: u64| {
            let v: Vec<f64> = positive_vec(n * m, seed).iter().map(|x| (x - 0.5) * 0.1).collect();
            Field2D::from_vec(v, n, m).unwrap()
        };
        let (al, be, ga) = (mk_pot(142), mk_pot(143), mk_pot(144));
        let (l1, l2, eps) = (0.5, 0.4, 0.08);

        let got = ftvp2d_log(&phi, &psi, &al, &be, &ga, l1, l2, eps).unwrap();
        let expect = brute_2d(&phi, &psi, l1, l2, None, Some((&al, &be, &ga, eps)));
        assert_close(&got, &expect, 1e-10);

        let (h1, h2) = (0.35, 0.55);
        let got = ftvp2d_2_log(&phi, &psi, &al, &be, &ga, l1, l2, eps, h1, h2).unwrap();
        let expect = brute_2d(&phi, &psi, l1, l2, Some((h1, h2)), Some((&al, &be, &ga, eps)));
        assert_close(&got, &expect, 1e-10);
    }

    fn random_marginal_2d(n: usize, m: usize, seed: u64) -> Marginal2D<f64> {
        let grid = Grid2D::unit_square(n, m).unwrap();
        Marginal2D::new(positive_vec(n * m, seed), grid).unwrap()
    }

    #[test]
    fn solver_point_mass_distance_zero() {
        let grid = Grid2D::<f64>::unit_square(4, 4).unwrap();
        let mut w = vec![0.0; 16];
        w[5] = 1.0;
        let mass = Marginal2D::new(w, grid).unwrap();
        let (_, report) =
            fast_sinkhorn_2d(&mass, &mass, &mass, &SinkhornConfig::default()).unwrap();
        assert!(report.distance.abs() < 1e-12);
    }

    #[test]
    fn solver_matches_dense_plan() {
        for nm in [4usize, 6] {
            let u = random_marginal_2d(nm, nm, 150);
            let v = random_marginal_2d(nm, nm, 151);
            let w = random_marginal_2d(nm, nm, 152);
            let config = SinkhornConfig { tol: 1e-300, ..SinkhornConfig::default() };
            let (fast_state, fast_report) = fast_sinkhorn_2d(&u, &v, &w, &config).unwrap();
            let (dense_state, dense_report) = dense_sinkhorn_2d(&u, &v, &w, &config).unwrap();
            let kernel = crate::oracle::dense_kernel_2d(u.grid(), config.epsilon).unwrap();
            let pf = dense_plan(&fast_state, &kernel).unwrap();
            let pd = dense_plan(&dense_state, &kernel).unwrap();
            let diff = pf.frobenius_diff(&pd).unwrap();
            assert!(diff <= 1e-12, "nm={nm} plan diff {diff}");
            assert!(
                (fast_report.distance - dense_report.distance).abs()
                    <= 1e-10 * dense_report.distance.abs()
            );
        }
    }

    #[test]
    fn solver_rectangular_support() {
        let u = random_marginal_2d(3, 5, 160);
        let v = random_marginal_2d(3, 5, 161);
        let w = random_marginal_2d(3, 5, 162);
        let config = SinkhornConfig { tol: 1e-300, ..SinkhornConfig::default() };
        let (fast_state, fast_report) = fast_sinkhorn_2d(&u, &v, &w, &config).unwrap();
        let (dense_state, _) = dense_sinkhorn_2d(&u, &v, &w, &config).unwrap();
        let kernel = crate::oracle::dense_kernel_2d(u.grid(), config.epsilon).unwrap();
        let pf = dense_plan(&fast_state, &kernel).unwrap();
        let pd = dense_plan(&dense_state, &kernel).unwrap();
        assert!(pf.frobenius_diff(&pd).unwrap() <= 1e-12);
        assert!(fast_report.residuals.iter().all(|r| r.is_finite()));
    }

    #[test]
    fn solver_stabilized_matches_dense_distance() {
        let nm = 5;
        let u = random_marginal_2d(nm, nm, 170);
        let v = random_marginal_2d(nm, nm, 171);
        let w = random_marginal_2d(nm, nm, 172);
        let config = SinkhornConfig {
            epsilon: 0.02,
            tau: 5.0,
            tol: 1e-300,
            itr_max: 150,
            ..SinkhornConfig::default()
        };
        let stab_cfg = SinkhornConfig { stabilize: true, ..config };
        let (_, stab) = fast_sinkhorn_2d(&u, &v, &w, &stab_cfg).unwrap();
        assert!(stab.absorptions.iter().sum::<u32>() > 0);
        let (_, dense) = dense_sinkhorn_2d(&u, &v, &w, &config).unwrap();
        let rel = (stab.distance - dense.distance).abs() / dense.distance.abs();
        assert!(rel <= 1e-8, "{} vs {}", stab.distance, dense.distance);
    }

    #[test]
    fn solver_rejects_mismatched_grids() {
        let u = random_marginal_2d(3, 4, 180);
        let v = random_marginal_2d(4, 3, 181);
        assert!(matches!(
            fast_sinkhorn_2d(&u, &v, &u, &SinkhornConfig::default()),
            Err(Error::ShapeMismatch { .. })
        ));
    }
}
