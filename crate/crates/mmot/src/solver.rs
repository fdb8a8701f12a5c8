//! Fast Sinkhorn drivers for the 1D three-marginal problem.
//!
//! The update cycle is strictly `phi`, then `psi`, then `varphi`, each
//! division using the freshest peers; the residual is evaluated once per
//! iteration after the `varphi` update. Every kernel contraction goes
//! through the linear-time sweeps, so one iteration costs O(N).
//!
//! With `stabilize` set, scaling vectors whose sup norm crosses `tau` are
//! absorbed into additive potentials after the iteration, and the
//! contractions switch to the rescaled-kernel sweeps. A stabilized run at
//! parameters where absorption never triggers is bit-identical to the plain
//! run.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::ftvp1d::FtvpWorkspace;
use crate::scalar::{to_f64, Scalar};
use crate::types::{
    Grid1D, KernelParams, Marginal1D, ResidualMode, ScalingState, SinkhornConfig, SolveReport,
};

/// Contraction output with the scaling state's potentials folded in when
/// any are set. `skip` names the free marginal (0 = phi, 1 = psi,
/// 2 = varphi); the two bound vectors are passed in mode order.
fn contract_skip<T: Scalar>(
    ws: &mut FtvpWorkspace<T>,
    state: &ScalingState<T>,
    skip: usize,
    params: &KernelParams<T>,
    log_domain: bool,
    out: &mut Vec<T>,
) -> Result<()> {
    let (a, b) = match skip {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    if log_domain {
        // Full index symmetry of the kernel lets the free mode move to the
        // last slot as long as the potentials travel with their vectors.
        ws.ftvp_log_into(
            state.scaling(a),
            state.scaling(b),
            state.potential(a),
            state.potential(b),
            state.potential(skip),
            params.lambda(),
            params.epsilon(),
            out,
        )
    } else {
        ws.ftvp1_into(state.scaling(a), state.scaling(b), params.lambda(), out)
    }
}

fn residual_with<T: Scalar>(
    ws: &mut FtvpWorkspace<T>,
    state: &ScalingState<T>,
    marginals: [&Marginal1D<T>; 3],
    params: &KernelParams<T>,
    mode: ResidualMode,
    log_domain: bool,
    buf: &mut Vec<T>,
) -> Result<T> {
    let checked = match mode {
        ResidualMode::Partial => 2,
        ResidualMode::Full => 3,
    };
    let mut res = T::zero();
    for j in 0..checked {
        contract_skip(ws, state, j, params, log_domain, buf)?;
        for ((&x, &m), &d) in state
            .scaling(j)
            .iter()
            .zip(marginals[j].weights())
            .zip(buf.iter())
        {
            res += (x * d - m).abs();
        }
    }
    Ok(res)
}

/// Constraint-violation residual of an arbitrary state.
pub fn residual<T: Scalar>(
    state: &ScalingState<T>,
    u: &Marginal1D<T>,
    v: &Marginal1D<T>,
    w: &Marginal1D<T>,
    params: &KernelParams<T>,
    mode: ResidualMode,
) -> Result<T> {
    let mut ws = FtvpWorkspace::new();
    let mut buf = Vec::new();
    let log_domain = state.has_potentials();
    residual_with(&mut ws, state, [u, v, w], params, mode, log_domain, &mut buf)
}

/// Transport distance of a (typically converged) state:
/// `<varphi, (C ⊙ K) x_i phi x_j psi>`, with the grid spacing applied
/// exactly once inside the cost-weighted sweep. Uses the rescaled sweep
/// when the state carries potentials.
pub fn distance<T: Scalar>(
    state: &ScalingState<T>,
    grid: &Grid1D<T>,
    params: &KernelParams<T>,
) -> Result<T> {
    let mut ws = FtvpWorkspace::new();
    let mut buf = Vec::new();
    if state.has_potentials() {
        ws.ftvp2_log_into(
            state.scaling(0),
            state.scaling(1),
            state.potential(0),
            state.potential(1),
            state.potential(2),
            params.lambda(),
            params.epsilon(),
            grid.spacing(),
            &mut buf,
        )?;
    } else {
        ws.ftvp2_into(
            state.scaling(0),
            state.scaling(1),
            params.lambda(),
            grid.spacing(),
            &mut buf,
        )?;
    }
    Ok(state
        .scaling(2)
        .iter()
        .zip(&buf)
        .map(|(&c, &p)| c * p)
        .sum())
}

/// Fast Sinkhorn solve for three 1D marginals on a shared uniform grid.
/// Routes to the stabilized loop when `config.stabilize` is set.
pub fn fast_sinkhorn_3m<T: Scalar>(
    u: &Marginal1D<T>,
    v: &Marginal1D<T>,
    w: &Marginal1D<T>,
    grid: &Grid1D<T>,
    config: &SinkhornConfig<T>,
) -> Result<(ScalingState<T>, SolveReport<T>)> {
    config.validate()?;
    let n = grid.n();
    for m in [u, v, w] {
        if m.len() != n {
            return Err(Error::ShapeMismatch { context: "marginal length", left: m.len(), right: n });
        }
    }
    let params = KernelParams::from_grid(grid, config.epsilon)?;
    let marginals = [u, v, w];
    let stabilize = config.stabilize;

    let start = Instant::now();
    let mut state = ScalingState::uniform(3, n);
    let mut ws = FtvpWorkspace::new();
    let mut buf = Vec::new();
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
        let log_domain = stabilize && state.has_potentials();
        for j in 0..3 {
            match contract_skip(&mut ws, &state, j, &params, log_domain, &mut buf) {
                Ok(()) => {}
                Err(Error::NumericalOverflow { .. }) => {
                    return Err(overflow(iterations, &residuals))
                }
                Err(e) => return Err(e),
            }
            let s = &mut state.scalings[j];
            for ((x, &m), &d) in s.iter_mut().zip(marginals[j].weights()).zip(&buf) {
                *x = m / d;
            }
            if s.iter().any(|x| !x.is_finite()) {
                return Err(overflow(iterations, &residuals));
            }
        }
        let res = match residual_with(
            &mut ws,
            &state,
            marginals,
            &params,
            config.residual_mode,
            log_domain,
            &mut buf,
        ) {
            Ok(r) => r,
            Err(Error::NumericalOverflow { .. }) => return Err(overflow(iterations, &residuals)),
            Err(e) => return Err(e),
        };
        if !res.is_finite() {
            return Err(overflow(iterations, &residuals));
        }
        residuals.push(res);
        iter_elapsed.push(start.elapsed().as_secs_f64());

        let mut absorbed = 0;
        if stabilize && state.max_scaling() > config.tau {
            state.absorb(config.epsilon);
            absorbed = 1;
        }
        absorptions.push(absorbed);

        if res <= config.tol {
            converged = true;
            break;
        }
    }

    let distance = distance(&state, grid, &params)?;
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

/// Stabilized variant: forces `stabilize = true` in the configuration.
pub fn fast_sinkhorn_3m_stabilized<T: Scalar>(
    u: &Marginal1D<T>,
    v: &Marginal1D<T>,
    w: &Marginal1D<T>,
    grid: &Grid1D<T>,
    config: &SinkhornConfig<T>,
) -> Result<(ScalingState<T>, SolveReport<T>)> {
    let config = SinkhornConfig { stabilize: true, ..*config };
    fast_sinkhorn_3m(u, v, w, grid, &config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ftvp1d::ftvp1;
    use crate::oracle::{
        dense_cost, dense_kernel, dense_plan, dense_sinkhorn,
    };
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn positive_vec(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen::<f64>() + 0.05).collect()
    }

    fn random_marginals(n: usize, base: u64) -> [Marginal1D<f64>; 3] {
        [
            Marginal1D::new(positive_vec(n, base)).unwrap(),
            Marginal1D::new(positive_vec(n, base + 1)).unwrap(),
            Marginal1D::new(positive_vec(n, base + 2)).unwrap(),
        ]
    }

    #[test]
    fn point_mass_zero_distance() {
        let n = 8;
        let g = Grid1D::<f64>::unit_interval(n).unwrap();
        let d = Marginal1D::dirac(n, 0).unwrap();
        let (_, report) = fast_sinkhorn_3m(&d, &d, &d, &g, &SinkhornConfig::default()).unwrap();
        assert!(report.converged);
        assert!(report.iterations <= 2, "took {}", report.iterations);
        assert!(report.distance.abs() < 1e-12);
    }

    #[test]
    fn lockstep_with_dense_oracle_every_iteration() {
        let n = 10;
        let g = Grid1D::unit_interval(n).unwrap();
        let [u, v, w] = random_marginals(n, 40);
        for iters in 1..=20 {
            let config = SinkhornConfig { tol: 1e-300, itr_max: iters, ..SinkhornConfig::default() };
            let (fast, _) = fast_sinkhorn_3m(&u, &v, &w, &g, &config).unwrap();
            let (dense, _) = dense_sinkhorn(&u, &v, &w, &g, &config).unwrap();
            for j in 0..3 {
                for (a, b) in fast.scaling(j).iter().zip(dense.scaling(j)) {
                    assert!(
                        (a - b).abs() <= 1e-12 * b.abs(),
                        "iteration {iters}, marginal {j}: {a} vs {b}"
                    );
                }
            }
        }
    }

    #[test]
    fn plan_difference_is_machine_scale() {
        let n = 20;
        let g = Grid1D::unit_interval(n).unwrap();
        let [u, v, w] = random_marginals(n, 50);
        let config = SinkhornConfig { tol: 1e-300, ..SinkhornConfig::default() };
        let (fast, _) = fast_sinkhorn_3m(&u, &v, &w, &g, &config).unwrap();
        let (dense, _) = dense_sinkhorn(&u, &v, &w, &g, &config).unwrap();
        let params = KernelParams::from_grid(&g, config.epsilon).unwrap();
        let kernel = dense_kernel(&g, &params, 3).unwrap();
        let pf = dense_plan(&fast, &kernel).unwrap();
        let pd = dense_plan(&dense, &kernel).unwrap();
        let diff = pf.frobenius_diff(&pd).unwrap();
        assert!(diff <= 1e-12, "plan diff {diff}");
    }

    #[test]
    fn residual_zero_at_synthetic_fixed_point() {
        // Build marginals from an arbitrary positive state so the state is
        // an exact fixed point of the optimality conditions.
        let n = 7;
        let g = Grid1D::unit_interval(n).unwrap();
        let params = KernelParams::from_grid(&g, 0.1).unwrap();
        let scalings = vec![
            positive_vec(n, 61),
            positive_vec(n, 62),
            positive_vec(n, 63),
        ];
        let state = ScalingState::from_scalings(scalings).unwrap();
        let make = |j: usize, other: (usize, usize)| {
            let prod = ftvp1(state.scaling(other.0), state.scaling(other.1), params.lambda()).unwrap();
            let raw: Vec<f64> = state.scaling(j).iter().zip(&prod).map(|(a, b)| a * b).collect();
            // These are exact marginals of the scaled kernel; keep them raw.
            raw
        };
        let u_raw = make(0, (1, 2));
        let v_raw = make(1, (0, 2));
        let w_raw = make(2, (0, 1));
        // Normalize consistently so they are probability vectors and the
        // same scaling state (rescaled) stays a fixed point.
        let mass: f64 = u_raw.iter().sum();
        let u = Marginal1D::new(u_raw.iter().map(|x| x / mass).collect::<Vec<_>>()).unwrap();
        let v = Marginal1D::new(v_raw.iter().map(|x| x / mass).collect::<Vec<_>>()).unwrap();
        let w = Marginal1D::new(w_raw.iter().map(|x| x / mass).collect::<Vec<_>>()).unwrap();
        let mut rescaled = state.clone();
        for s in rescaled.scalings.iter_mut().take(1) {
            for x in s.iter_mut() {
                *x /= mass;
            }
        }
        let res = residual(&rescaled, &u, &v, &w, &params, ResidualMode::Full).unwrap();
        assert!(res < 1e-12, "residual at fixed point: {res}");
    }

    #[test]
    fn residual_u_term_small_after_phi_update() {
        let n = 10;
        let g = Grid1D::unit_interval(n).unwrap();
        let [u, v, w] = random_marginals(n, 70);
        let params = KernelParams::from_grid(&g, 0.1).unwrap();
        // One phi-update by hand from the uniform start.
        let mut state = ScalingState::uniform(3, n);
        let den = ftvp1(state.scaling(1), state.scaling(2), params.lambda()).unwrap();
        for (x, (&m, &d)) in state.scalings[0].iter_mut().zip(u.weights().iter().zip(&den)) {
            *x = m / d;
        }
        let prod = ftvp1(state.scaling(1), state.scaling(2), params.lambda()).unwrap();
        let u_term: f64 = state
            .scaling(0)
            .iter()
            .zip(u.weights())
            .zip(&prod)
            .map(|((&x, &m), &d)| (x * d - m).abs())
            .sum();
        assert!(u_term <= 1e-14, "u-term {u_term}");
        let _ = (v, w);
    }

    #[test]
    fn residual_matches_dense_oracle_at_first_iteration() {
        let n = 10;
        let g = Grid1D::unit_interval(n).unwrap();
        let [u, v, w] = random_marginals(n, 80);
        let config = SinkhornConfig { itr_max: 1, tol: 1e-300, ..SinkhornConfig::default() };
        let (_, fast) = fast_sinkhorn_3m(&u, &v, &w, &g, &config).unwrap();
        let (_, dense) = dense_sinkhorn(&u, &v, &w, &g, &config).unwrap();
        let a = fast.residuals[0];
        let b = dense.residuals[0];
        assert!((a - b).abs() <= 1e-12 * b.abs(), "{a} vs {b}");
    }

    #[test]
    fn distance_matches_dense_oracle() {
        let n = 10;
        let g = Grid1D::unit_interval(n).unwrap();
        let [u, v, w] = random_marginals(n, 90);
        let config = SinkhornConfig::default();
        let (fast_state, fast_report) = fast_sinkhorn_3m(&u, &v, &w, &g, &config).unwrap();
        let params = KernelParams::from_grid(&g, config.epsilon).unwrap();
        let cost = dense_cost(&g, 3).unwrap();
        let kernel = dense_kernel(&g, &params, 3).unwrap();
        let dd = crate::oracle::dense_distance(&fast_state, &cost, &kernel).unwrap();
        assert!(
            (fast_report.distance - dd).abs() <= 1e-10 * dd.abs(),
            "{} vs {dd}",
            fast_report.distance
        );
    }

    #[test]
    fn stabilized_without_absorption_is_bit_identical() {
        let n = 12;
        let g = Grid1D::unit_interval(n).unwrap();
        let [u, v, w] = random_marginals(n, 100);
        let config = SinkhornConfig { tol: 1e-300, ..SinkhornConfig::default() };
        let (plain_state, plain) = fast_sinkhorn_3m(&u, &v, &w, &g, &config).unwrap();
        let (stab_state, stab) = fast_sinkhorn_3m_stabilized(&u, &v, &w, &g, &config).unwrap();
        assert_eq!(stab.absorptions.iter().sum::<u32>(), 0);
        assert_eq!(plain_state, stab_state);
        assert_eq!(plain.distance, stab.distance);
        assert_eq!(plain.residuals, stab.residuals);
    }

    #[test]
    fn stabilized_with_forced_absorption_matches_dense_distance() {
        // A small tau forces absorptions at parameters where the plain
        // dense oracle still survives, so the two must agree.
        let n = 16;
        let g = Grid1D::unit_interval(n).unwrap();
        let [u, v, w] = random_marginals(n, 110);
        let config = SinkhornConfig {
            epsilon: 0.02,
            tau: 5.0,
            tol: 1e-300,
            itr_max: 200,
            ..SinkhornConfig::default()
        };
        let stab_cfg = SinkhornConfig { stabilize: true, ..config };
        let (_, stab) = fast_sinkhorn_3m(&u, &v, &w, &g, &stab_cfg).unwrap();
        assert!(stab.absorptions.iter().sum::<u32>() > 0, "absorption never triggered");
        assert!(stab.residuals.iter().all(|r| r.is_finite()));
        let (_, dense) = dense_sinkhorn(&u, &v, &w, &g, &config).unwrap();
        let rel = (stab.distance - dense.distance).abs() / dense.distance.abs();
        assert!(rel <= 1e-8, "distance {} vs {}", stab.distance, dense.distance);
    }

    #[test]
    fn report_shape_invariants() {
        let n = 6;
        let g = Grid1D::unit_interval(n).unwrap();
        let [u, v, w] = random_marginals(n, 120);
        let config = SinkhornConfig { itr_max: 17, tol: 1e-300, ..SinkhornConfig::default() };
        let (_, report) = fast_sinkhorn_3m(&u, &v, &w, &g, &config).unwrap();
        assert_eq!(report.iterations, 17);
        assert_eq!(report.residuals.len(), report.iterations);
        assert_eq!(report.absorptions.len(), report.iterations);
        assert_eq!(report.iter_elapsed_s.len(), report.iterations);
        assert!(report.residuals.iter().all(|r| r.is_finite()));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let g = Grid1D::unit_interval(8).unwrap();
        let a = Marginal1D::new(positive_vec(8, 1)).unwrap();
        let b = Marginal1D::new(positive_vec(7, 2)).unwrap();
        assert!(matches!(
            fast_sinkhorn_3m(&a, &b, &a, &g, &SinkhornConfig::default()),
            Err(Error::ShapeMismatch { .. })
        ));
    }
}
