//! Linear-time tensor-vector products against the separable three-way L1
//! kernel `K_{ijk} = lambda^(|i-j| + |i-k| + |j-k|)`.
//!
//! Summing `K_{ijk} phi_i psi_j` over `i, j` for every `k` is nominally
//! cubic. Splitting the index cube by the sort order of `(i, j, k)` into six
//! regions makes the exponent linear on each region, and each region sum
//! then collapses into prefix/suffix recurrences: one forward and one
//! backward sweep of length-`N` accumulators. The same machinery extends to
//! the cost-weighted kernel `C ⊙ K` (index-weighted accumulators alongside
//! the plain ones) and to the log-domain rescaled kernel
//! `exp((alpha_i + beta_j + gamma_k)/eps) * K` (ratio factors folded into
//! every recurrence step).
//!
//! All sweeps are O(N) with small constants; `lambda^2` and `lambda^4` are
//! precomputed once per call and no per-step exponentiation happens outside
//! the log-domain variants.

use crate::error::{Error, Result};
use crate::scalar::{cast, cast_index, Scalar};

/// Which two kernel modes a two-vector contraction binds. The kernel is
/// fully symmetric under index permutation, so every variant reduces to the
/// same sweep with the arguments taken in sorted-mode order; the permuted
/// kernel is never materialized.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundModes {
    /// Bind `(i, j)`, leaving `k` free.
    IJ,
    /// Bind `(i, k)`, leaving `j` free.
    IK,
    /// Bind `(j, k)`, leaving `i` free.
    JK,
}

/// Reusable length-N accumulators for the sweeps: per-region prefix/suffix
/// sums (`p*`, `q*`), their index-weighted counterparts (`r*`, `s*`), and
/// the per-region partial outputs (`j`, plain; `jw`, cost-weighted).
///
/// A workspace may be reused across calls of any size (buffers are resized
/// at entry) but must not be shared across concurrent calls.
#[derive(Clone, Debug, Default)]
pub struct FtvpWorkspace<T> {
    n: usize,
    p1: Vec<T>,
    p2: Vec<T>,
    p3: Vec<T>,
    p4: Vec<T>,
    p5: Vec<T>,
    p6: Vec<T>,
    q3: Vec<T>,
    q4: Vec<T>,
    r1: Vec<T>,
    r2: Vec<T>,
    r3: Vec<T>,
    r4: Vec<T>,
    r5: Vec<T>,
    r6: Vec<T>,
    s3: Vec<T>,
    s4: Vec<T>,
    j: [Vec<T>; 6],
    jw: [Vec<T>; 6],
}

fn check_pair<T: Scalar>(phi: &[T], psi: &[T], lambda: T) -> Result<()> {
    if phi.len() != psi.len() {
        return Err(Error::ShapeMismatch {
            context: "ftvp arguments",
            left: phi.len(),
            right: psi.len(),
        });
    }
    if phi.is_empty() {
        return Err(Error::ShapeMismatch { context: "ftvp arguments", left: 0, right: 1 });
    }
    if !lambda.is_finite() || lambda <= T::zero() || lambda > T::one() {
        return Err(Error::InvalidParam {
            name: "lambda",
            value: lambda.to_f64().unwrap_or(f64::NAN),
        });
    }
    if phi.iter().chain(psi.iter()).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite { context: "ftvp input vectors" });
    }
    Ok(())
}

fn check_potentials<T: Scalar>(n: usize, pots: [&[T]; 3], epsilon: T) -> Result<()> {
    for p in pots {
        if p.len() != n {
            return Err(Error::ShapeMismatch { context: "log potentials", left: p.len(), right: n });
        }
        if p.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { context: "log potentials" });
        }
    }
    if !epsilon.is_finite() || epsilon <= T::zero() {
        return Err(Error::InvalidParam {
            name: "epsilon",
            value: epsilon.to_f64().unwrap_or(f64::NAN),
        });
    }
    Ok(())
}

impl<T: Scalar> FtvpWorkspace<T> {
    pub fn new() -> Self {
        Self::default()
    }

    fn ensure(&mut self, n: usize) {
        self.n = n;
        for v in [
            &mut self.p1, &mut self.p2, &mut self.p3, &mut self.p4, &mut self.p5, &mut self.p6,
            &mut self.q3, &mut self.q4, &mut self.r1, &mut self.r2, &mut self.r3, &mut self.r4,
            &mut self.r5, &mut self.r6, &mut self.s3, &mut self.s4,
        ] {
            v.clear();
            v.resize(n, T::zero());
        }
        for v in self.j.iter_mut().chain(self.jw.iter_mut()) {
            v.clear();
            v.resize(n, T::zero());
        }
    }

    /// Per-region partial sums of the last plain or log call; `out` is their
    /// entrywise total.
    pub fn region_sums(&self) -> [&[T]; 6] {
        [
            &self.j[0][..self.n],
            &self.j[1][..self.n],
            &self.j[2][..self.n],
            &self.j[3][..self.n],
            &self.j[4][..self.n],
            &self.j[5][..self.n],
        ]
    }

    /// Per-region partial sums of the last cost-weighted call, prior to the
    /// single multiplication by the grid spacing.
    pub fn weighted_region_sums(&self) -> [&[T]; 6] {
        [
            &self.jw[0][..self.n],
            &self.jw[1][..self.n],
            &self.jw[2][..self.n],
            &self.jw[3][..self.n],
            &self.jw[4][..self.n],
            &self.jw[5][..self.n],
        ]
    }

    fn fill_pq(&mut self, phi: &[T], psi: &[T], lam2: T, lam4: T) {
        let n = self.n;
        self.p1[0] = phi[0];
        self.p2[0] = lam2 * psi[0];
        self.p3[0] = phi[0];
        self.p4[0] = psi[0];
        self.q3[n - 1] = lam2 * psi[n - 1];
        self.q4[n - 1] = lam2 * phi[n - 1];
        self.p5[n - 1] = lam2 * psi[n - 1];
        self.p6[n - 1] = lam4 * phi[n - 1];
        for k in 0..n - 1 {
            let t = k + 1;
            self.p1[t] = lam2 * self.p1[t - 1] + phi[t];
            self.p2[t] = lam2 * (self.p2[t - 1] + psi[t]);
            self.p3[t] = lam2 * self.p3[t - 1] + phi[t];
            self.p4[t] = lam2 * self.p4[t - 1] + psi[t];
            let u = n - 2 - k;
            self.q3[u] = lam2 * (self.q3[u + 1] + psi[u]);
            self.q4[u] = lam2 * (self.q4[u + 1] + phi[u]);
            self.p5[u] = lam2 * (self.p5[u + 1] + psi[u]);
            self.p6[u] = lam2 * self.p6[u + 1] + lam4 * phi[u];
        }
    }

    fn fill_j(&mut self, phi: &[T], psi: &[T], lam2: T) {
        let n = self.n;
        self.j[0][0] = phi[0] * psi[0];
        self.j[1][0] = T::zero();
        for t in 1..n {
            self.j[0][t] = lam2 * self.j[0][t - 1] + psi[t] * self.p1[t];
            self.j[1][t] = lam2 * self.j[1][t - 1] + phi[t] * self.p2[t - 1];
        }
        for t in 0..n - 1 {
            self.j[2][t] = self.p3[t] * self.q3[t + 1];
            self.j[3][t] = self.p4[t] * self.q4[t + 1];
        }
        self.j[2][n - 1] = T::zero();
        self.j[3][n - 1] = T::zero();
        self.j[4][n - 1] = T::zero();
        for s in (1..n).rev() {
            self.j[4][s - 1] = lam2 * self.j[4][s] + phi[s] * self.p5[s];
        }
        self.j[5][n - 1] = T::zero();
        if n >= 2 {
            self.j[5][n - 2] = T::zero();
        }
        for s in (1..n.saturating_sub(1)).rev() {
            self.j[5][s - 1] = lam2 * self.j[5][s] + psi[s] * self.p6[s + 1];
        }
    }

    /// `out_k = sum_{i,j} K_{ijk} phi_i psi_j` for all `k`.
    pub fn ftvp1_into(
        &mut self,
        phi: &[T],
        psi: &[T],
        lambda: T,
        out: &mut Vec<T>,
    ) -> Result<()> {
        check_pair(phi, psi, lambda)?;
        let n = phi.len();
        self.ensure(n);
        let lam2 = lambda * lambda;
        let lam4 = lam2 * lam2;
        self.fill_pq(phi, psi, lam2, lam4);
        self.fill_j(phi, psi, lam2);
        out.clear();
        for k in 0..n {
            out.push(
                self.j[0][k] + self.j[1][k] + self.j[2][k] + self.j[3][k] + self.j[4][k]
                    + self.j[5][k],
            );
        }
        Ok(())
    }

    fn fill_rs(&mut self, phi: &[T], psi: &[T], lam2: T, lam4: T) {
        let n = self.n;
        let two = cast::<T>(2.0);
        let big = cast_index::<T>(2 * n);
        self.r1[0] = -(two * phi[0]);
        self.r2[0] = -(two * lam2 * psi[0]);
        self.r3[0] = -(two * phi[0]);
        self.r4[0] = -(two * psi[0]);
        self.s3[n - 1] = big * lam2 * psi[n - 1];
        self.s4[n - 1] = big * lam2 * phi[n - 1];
        self.r5[n - 1] = big * lam2 * psi[n - 1];
        self.r6[n - 1] = big * lam4 * phi[n - 1];
        for k in 0..n - 1 {
            let t = k + 1;
            let cf = cast_index::<T>(2 * (t + 1));
            self.r1[t] = lam2 * self.r1[t - 1] - cf * phi[t];
            self.r2[t] = lam2 * (self.r2[t - 1] - cf * psi[t]);
            self.r3[t] = lam2 * self.r3[t - 1] - cf * phi[t];
            self.r4[t] = lam2 * self.r4[t - 1] - cf * psi[t];
            let u = n - 2 - k;
            let cb = cast_index::<T>(2 * (u + 1));
            self.s3[u] = lam2 * (self.s3[u + 1] + cb * psi[u]);
            self.s4[u] = lam2 * (self.s4[u + 1] + cb * phi[u]);
            self.r5[u] = lam2 * (self.r5[u + 1] + cb * psi[u]);
            self.r6[u] = lam2 * (self.r6[u + 1] + cb * lam2 * phi[u]);
        }
    }

    fn fill_jw(&mut self, phi: &[T], psi: &[T], lam2: T) {
        let n = self.n;
        let two = cast::<T>(2.0);
        self.jw[0][0] = T::zero();
        self.jw[1][0] = T::zero();
        for t in 1..n {
            let cf = cast_index::<T>(2 * (t + 1));
            self.jw[0][t] = lam2 * (self.jw[0][t - 1] + two * self.j[0][t - 1])
                + psi[t] * (self.r1[t] + cf * self.p1[t]);
            self.jw[1][t] = lam2 * (self.jw[1][t - 1] + two * self.j[1][t - 1])
                + phi[t] * (self.r2[t - 1] + cf * self.p2[t - 1]);
        }
        for t in 0..n - 1 {
            self.jw[2][t] = self.r3[t] * self.q3[t + 1] + self.p3[t] * self.s3[t + 1];
            self.jw[3][t] = self.r4[t] * self.q4[t + 1] + self.p4[t] * self.s4[t + 1];
        }
        self.jw[2][n - 1] = T::zero();
        self.jw[3][n - 1] = T::zero();
        self.jw[4][n - 1] = T::zero();
        for s in (1..n).rev() {
            let cb = cast_index::<T>(2 * s);
            self.jw[4][s - 1] = lam2 * (self.jw[4][s] + two * self.j[4][s])
                + phi[s] * (self.r5[s] - cb * self.p5[s]);
        }
        self.jw[5][n - 1] = T::zero();
        if n >= 2 {
            self.jw[5][n - 2] = T::zero();
        }
        for s in (1..n.saturating_sub(1)).rev() {
            let cb = cast_index::<T>(2 * s);
            self.jw[5][s - 1] = lam2 * (self.jw[5][s] + two * self.j[5][s])
                + psi[s] * (self.r6[s + 1] - cb * self.p6[s + 1]);
        }
    }

    /// `out_k = sum_{i,j} c_{ijk} K_{ijk} phi_i psi_j` for all `k`. The grid
    /// spacing `h` is applied exactly once, here.
    pub fn ftvp2_into(
        &mut self,
        phi: &[T],
        psi: &[T],
        lambda: T,
        h: T,
        out: &mut Vec<T>,
    ) -> Result<()> {
        check_pair(phi, psi, lambda)?;
        if !h.is_finite() || h <= T::zero() {
            return Err(Error::InvalidParam { name: "h", value: h.to_f64().unwrap_or(f64::NAN) });
        }
        let n = phi.len();
        self.ensure(n);
        let lam2 = lambda * lambda;
        let lam4 = lam2 * lam2;
        self.fill_pq(phi, psi, lam2, lam4);
        self.fill_j(phi, psi, lam2);
        self.fill_rs(phi, psi, lam2, lam4);
        self.fill_jw(phi, psi, lam2);
        out.clear();
        for k in 0..n {
            out.push(
                h * (self.jw[0][k] + self.jw[1][k] + self.jw[2][k] + self.jw[3][k]
                    + self.jw[4][k]
                    + self.jw[5][k]),
            );
        }
        Ok(())
    }

    fn fill_pq_log(
        &mut self,
        phi: &[T],
        psi: &[T],
        alpha: &[T],
        beta: &[T],
        lam2: T,
        lam4: T,
        eps: T,
    ) {
        let n = self.n;
        self.p1[0] = phi[0];
        self.p2[0] = lam2 * psi[0];
        self.p3[0] = phi[0];
        self.p4[0] = psi[0];
        self.q3[n - 1] = lam2 * psi[n - 1];
        self.q4[n - 1] = lam2 * phi[n - 1];
        self.p5[n - 1] = lam2 * psi[n - 1];
        self.p6[n - 1] = lam4 * phi[n - 1];
        for k in 0..n - 1 {
            // Forward accumulators are anchored at the current index; the
            // ratio factor moves the anchor one step. At zero potentials
            // every ratio is exactly one and the plain sweep is recovered
            // bit for bit.
            let t = k + 1;
            let ra = ((alpha[t - 1] - alpha[t]) / eps).exp();
            let rb = ((beta[t - 1] - beta[t]) / eps).exp();
            self.p1[t] = lam2 * (ra * self.p1[t - 1]) + phi[t];
            self.p2[t] = lam2 * (rb * self.p2[t - 1] + psi[t]);
            self.p3[t] = lam2 * (ra * self.p3[t - 1]) + phi[t];
            self.p4[t] = lam2 * (rb * self.p4[t - 1]) + psi[t];
            let u = n - 2 - k;
            let ra_b = ((alpha[u + 1] - alpha[u]) / eps).exp();
            let rb_b = ((beta[u + 1] - beta[u]) / eps).exp();
            self.q3[u] = lam2 * (rb_b * self.q3[u + 1] + psi[u]);
            self.q4[u] = lam2 * (ra_b * self.q4[u + 1] + phi[u]);
            self.p5[u] = lam2 * (rb_b * self.p5[u + 1] + psi[u]);
            self.p6[u] = lam2 * (ra_b * self.p6[u + 1]) + lam4 * phi[u];
        }
    }

    fn fill_j_log(
        &mut self,
        phi: &[T],
        psi: &[T],
        alpha: &[T],
        beta: &[T],
        gamma: &[T],
        lam2: T,
        eps: T,
    ) {
        let n = self.n;
        self.j[0][0] = (phi[0] * ((alpha[0] + beta[0] + gamma[0]) / eps).exp()) * psi[0];
        self.j[1][0] = T::zero();
        for t in 1..n {
            let rg = ((gamma[t] - gamma[t - 1]) / eps).exp();
            let e1 = ((alpha[t] + beta[t] + gamma[t]) / eps).exp();
            let e2 = ((alpha[t] + beta[t - 1] + gamma[t]) / eps).exp();
            self.j[0][t] = lam2 * (rg * self.j[0][t - 1]) + (psi[t] * e1) * self.p1[t];
            self.j[1][t] = lam2 * (rg * self.j[1][t - 1]) + (phi[t] * e2) * self.p2[t - 1];
        }
        for t in 0..n - 1 {
            let e3 = ((alpha[t] + beta[t + 1] + gamma[t]) / eps).exp();
            let e4 = ((alpha[t + 1] + beta[t] + gamma[t]) / eps).exp();
            self.j[2][t] = (e3 * self.p3[t]) * self.q3[t + 1];
            self.j[3][t] = (e4 * self.p4[t]) * self.q4[t + 1];
        }
        self.j[2][n - 1] = T::zero();
        self.j[3][n - 1] = T::zero();
        self.j[4][n - 1] = T::zero();
        for s in (1..n).rev() {
            let rg = ((gamma[s - 1] - gamma[s]) / eps).exp();
            let e5 = ((alpha[s] + beta[s] + gamma[s - 1]) / eps).exp();
            self.j[4][s - 1] = lam2 * (rg * self.j[4][s]) + (phi[s] * e5) * self.p5[s];
        }
        self.j[5][n - 1] = T::zero();
        if n >= 2 {
            self.j[5][n - 2] = T::zero();
        }
        for s in (1..n.saturating_sub(1)).rev() {
            let rg = ((gamma[s - 1] - gamma[s]) / eps).exp();
            let e6 = ((alpha[s + 1] + beta[s] + gamma[s - 1]) / eps).exp();
            self.j[5][s - 1] = lam2 * (rg * self.j[5][s]) + (psi[s] * e6) * self.p6[s + 1];
        }
    }

    /// `out_k = sum_{i,j} exp((alpha_i + beta_j + gamma_k)/eps) K_{ijk}
    /// phi_i psi_j`. The rescaled kernel of log-domain stabilization; only
    /// ratio and sum exponentials of the potentials are ever evaluated, so
    /// the sweep stays finite while the raw factors `exp(alpha_i/eps)`
    /// would overflow.
    #[allow(clippy::too_many_arguments)]
    pub fn ftvp_log_into(
        &mut self,
        phi: &[T],
        psi: &[T],
        alpha: &[T],
        beta: &[T],
        gamma: &[T],
        lambda: T,
        epsilon: T,
        out: &mut Vec<T>,
    ) -> Result<()> {
        check_pair(phi, psi, lambda)?;
        check_potentials(phi.len(), [alpha, beta, gamma], epsilon)?;
        let n = phi.len();
        self.ensure(n);
        let lam2 = lambda * lambda;
        let lam4 = lam2 * lam2;
        self.fill_pq_log(phi, psi, alpha, beta, lam2, lam4, epsilon);
        self.fill_j_log(phi, psi, alpha, beta, gamma, lam2, epsilon);
        out.clear();
        for k in 0..n {
            out.push(
                self.j[0][k] + self.j[1][k] + self.j[2][k] + self.j[3][k] + self.j[4][k]
                    + self.j[5][k],
            );
        }
        if out.iter().any(|x| !x.is_finite()) {
            return Err(Error::NumericalOverflow { iteration: 0, residuals: Vec::new() });
        }
        Ok(())
    }

    fn fill_rs_log(
        &mut self,
        phi: &[T],
        psi: &[T],
        alpha: &[T],
        beta: &[T],
        lam2: T,
        lam4: T,
        eps: T,
    ) {
        let n = self.n;
        let two = cast::<T>(2.0);
        let big = cast_index::<T>(2 * n);
        self.r1[0] = -(two * phi[0]);
        self.r2[0] = -(two * lam2 * psi[0]);
        self.r3[0] = -(two * phi[0]);
        self.r4[0] = -(two * psi[0]);
        self.s3[n - 1] = big * lam2 * psi[n - 1];
        self.s4[n - 1] = big * lam2 * phi[n - 1];
        self.r5[n - 1] = big * lam2 * psi[n - 1];
        self.r6[n - 1] = big * lam4 * phi[n - 1];
        for k in 0..n - 1 {
            let t = k + 1;
            let cf = cast_index::<T>(2 * (t + 1));
            let ra = ((alpha[t - 1] - alpha[t]) / eps).exp();
            let rb = ((beta[t - 1] - beta[t]) / eps).exp();
            self.r1[t] = lam2 * (ra * self.r1[t - 1]) - cf * phi[t];
            self.r2[t] = lam2 * (rb * self.r2[t - 1] - cf * psi[t]);
            self.r3[t] = lam2 * (ra * self.r3[t - 1]) - cf * phi[t];
            self.r4[t] = lam2 * (rb * self.r4[t - 1]) - cf * psi[t];
            let u = n - 2 - k;
            let cb = cast_index::<T>(2 * (u + 1));
            let ra_b = ((alpha[u + 1] - alpha[u]) / eps).exp();
            let rb_b = ((beta[u + 1] - beta[u]) / eps).exp();
            self.s3[u] = lam2 * (rb_b * self.s3[u + 1] + cb * psi[u]);
            self.s4[u] = lam2 * (ra_b * self.s4[u + 1] + cb * phi[u]);
            self.r5[u] = lam2 * (rb_b * self.r5[u + 1] + cb * psi[u]);
            self.r6[u] = lam2 * (ra_b * self.r6[u + 1] + cb * lam2 * phi[u]);
        }
    }

    fn fill_jw_log(
        &mut self,
        phi: &[T],
        psi: &[T],
        alpha: &[T],
        beta: &[T],
        gamma: &[T],
        lam2: T,
        eps: T,
    ) {
        let n = self.n;
        let two = cast::<T>(2.0);
        self.jw[0][0] = T::zero();
        self.jw[1][0] = T::zero();
        for t in 1..n {
            let cf = cast_index::<T>(2 * (t + 1));
            let rg = ((gamma[t] - gamma[t - 1]) / eps).exp();
            let e1 = ((alpha[t] + beta[t] + gamma[t]) / eps).exp();
            let e2 = ((alpha[t] + beta[t - 1] + gamma[t]) / eps).exp();
            self.jw[0][t] = lam2 * (rg * (self.jw[0][t - 1] + two * self.j[0][t - 1]))
                + (psi[t] * e1) * (self.r1[t] + cf * self.p1[t]);
            self.jw[1][t] = lam2 * (rg * (self.jw[1][t - 1] + two * self.j[1][t - 1]))
                + (phi[t] * e2) * (self.r2[t - 1] + cf * self.p2[t - 1]);
        }
        for t in 0..n - 1 {
            let e3 = ((alpha[t] + beta[t + 1] + gamma[t]) / eps).exp();
            let e4 = ((alpha[t + 1] + beta[t] + gamma[t]) / eps).exp();
            self.jw[2][t] = e3 * (self.r3[t] * self.q3[t + 1] + self.p3[t] * self.s3[t + 1]);
            self.jw[3][t] = e4 * (self.r4[t] * self.q4[t + 1] + self.p4[t] * self.s4[t + 1]);
        }
        self.jw[2][n - 1] = T::zero();
        self.jw[3][n - 1] = T::zero();
        self.jw[4][n - 1] = T::zero();
        for s in (1..n).rev() {
            let cb = cast_index::<T>(2 * s);
            let rg = ((gamma[s - 1] - gamma[s]) / eps).exp();
            let e5 = ((alpha[s] + beta[s] + gamma[s - 1]) / eps).exp();
            self.jw[4][s - 1] = lam2 * (rg * (self.jw[4][s] + two * self.j[4][s]))
                + (phi[s] * e5) * (self.r5[s] - cb * self.p5[s]);
        }
        self.jw[5][n - 1] = T::zero();
        if n >= 2 {
            self.jw[5][n - 2] = T::zero();
        }
        for s in (1..n.saturating_sub(1)).rev() {
            let cb = cast_index::<T>(2 * s);
            let rg = ((gamma[s - 1] - gamma[s]) / eps).exp();
            let e6 = ((alpha[s + 1] + beta[s] + gamma[s - 1]) / eps).exp();
            self.jw[5][s - 1] = lam2 * (rg * (self.jw[5][s] + two * self.j[5][s]))
                + (psi[s] * e6) * (self.r6[s + 1] - cb * self.p6[s + 1]);
        }
    }

    /// Cost-weighted log-domain product:
    /// `out_k = sum exp((alpha_i + beta_j + gamma_k)/eps) c_{ijk} K_{ijk}
    /// phi_i psi_j`, with `h` applied exactly once. This is the distance
    /// evaluation companion of [`Self::ftvp_log_into`].
    #[allow(clippy::too_many_arguments)]
    pub fn ftvp2_log_into(
        &mut self,
        phi: &[T],
        psi: &[T],
        alpha: &[T],
        beta: &[T],
        gamma: &[T],
        lambda: T,
        epsilon: T,
        h: T,
        out: &mut Vec<T>,
    ) -> Result<()> {
        check_pair(phi, psi, lambda)?;
        check_potentials(phi.len(), [alpha, beta, gamma], epsilon)?;
        if !h.is_finite() || h <= T::zero() {
            return Err(Error::InvalidParam { name: "h", value: h.to_f64().unwrap_or(f64::NAN) });
        }
        let n = phi.len();
        self.ensure(n);
        let lam2 = lambda * lambda;
        let lam4 = lam2 * lam2;
        self.fill_pq_log(phi, psi, alpha, beta, lam2, lam4, epsilon);
        self.fill_j_log(phi, psi, alpha, beta, gamma, lam2, epsilon);
        self.fill_rs_log(phi, psi, alpha, beta, lam2, lam4, epsilon);
        self.fill_jw_log(phi, psi, alpha, beta, gamma, lam2, epsilon);
        out.clear();
        for k in 0..n {
            out.push(
                h * (self.jw[0][k] + self.jw[1][k] + self.jw[2][k] + self.jw[3][k]
                    + self.jw[4][k]
                    + self.jw[5][k]),
            );
        }
        if out.iter().any(|x| !x.is_finite()) {
            return Err(Error::NumericalOverflow { iteration: 0, residuals: Vec::new() });
        }
        Ok(())
    }
}

/// Allocating convenience wrapper around [`FtvpWorkspace::ftvp1_into`].
pub fn ftvp1<T: Scalar>(phi: &[T], psi: &[T], lambda: T) -> Result<Vec<T>> {
    let mut ws = FtvpWorkspace::new();
    let mut out = Vec::new();
    ws.ftvp1_into(phi, psi, lambda, &mut out)?;
    Ok(out)
}

/// Allocating convenience wrapper around [`FtvpWorkspace::ftvp2_into`].
pub fn ftvp2<T: Scalar>(phi: &[T], psi: &[T], lambda: T, h: T) -> Result<Vec<T>> {
    let mut ws = FtvpWorkspace::new();
    let mut out = Vec::new();
    ws.ftvp2_into(phi, psi, lambda, h, &mut out)?;
    Ok(out)
}

/// Allocating convenience wrapper around [`FtvpWorkspace::ftvp_log_into`].
pub fn ftvp_log<T: Scalar>(
    phi: &[T],
    psi: &[T],
    alpha: &[T],
    beta: &[T],
    gamma: &[T],
    lambda: T,
    epsilon: T,
) -> Result<Vec<T>> {
    let mut ws = FtvpWorkspace::new();
    let mut out = Vec::new();
    ws.ftvp_log_into(phi, psi, alpha, beta, gamma, lambda, epsilon, &mut out)?;
    Ok(out)
}

/// Allocating convenience wrapper around [`FtvpWorkspace::ftvp2_log_into`].
#[allow(clippy::too_many_arguments)]
pub fn ftvp2_log<T: Scalar>(
    phi: &[T],
    psi: &[T],
    alpha: &[T],
    beta: &[T],
    gamma: &[T],
    lambda: T,
    epsilon: T,
    h: T,
) -> Result<Vec<T>> {
    let mut ws = FtvpWorkspace::new();
    let mut out = Vec::new();
    ws.ftvp2_log_into(phi, psi, alpha, beta, gamma, lambda, epsilon, h, &mut out)?;
    Ok(out)
}

/// Contract the kernel against two vectors bound to the requested modes,
/// with `a` on the lower and `b` on the higher bound mode. Full index
/// symmetry of the kernel means every variant is the same sweep.
pub fn contract_mode<T: Scalar>(
    a: &[T],
    b: &[T],
    lambda: T,
    modes: BoundModes,
) -> Result<Vec<T>> {
    match modes {
        BoundModes::IJ | BoundModes::IK | BoundModes::JK => ftvp1(a, b, lambda),
    }
}
