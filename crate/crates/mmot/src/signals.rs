//! Instance generation and ingestion: seeded random marginals, Ricker
//! wavelets, and grayscale-image conversion.
//!
//! Random draws use a ChaCha8 stream seeded through
//! `SeedableRng::seed_from_u64`, with `f64` samples uniform on `[0, 1)`.
//! The generator and the sampling order are pinned so a given seed yields
//! the same instance on every platform; generation always happens in `f64`
//! and is converted to the target scalar afterwards.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::{cast, to_f64, Scalar};
use crate::types::{Grid1D, Grid2D, Marginal1D, Marginal2D};

/// Ricker wavelet `A (1 - 2 pi^2 F0^2 t^2) exp(-pi^2 F0^2 t^2)`, the
/// standard seismic source time function. Even in `t`; equals `A` at zero.
pub fn ricker<T: Scalar>(t: T, amplitude: T, f0: T) -> T {
    let pi = cast::<T>(std::f64::consts::PI);
    let arg = pi * pi * f0 * f0 * t * t;
    amplitude * (T::one() - cast::<T>(2.0) * arg) * (-arg).exp()
}

/// Sampled, shifted Ricker wavelet turned into a probability vector.
#[derive(Clone, Copy, Debug)]
pub struct RickerConfig<T> {
    pub amplitude: T,
    /// Dominant frequency, > 0.
    pub f0: T,
    /// Time shift of the wavelet center.
    pub tau: T,
    /// Stabilization mass spread uniformly over the grid, >= 0.
    pub delta: T,
    pub t_min: T,
    pub t_max: T,
    /// Sample count, >= 2.
    pub n: usize,
}

impl<T: Scalar> Default for RickerConfig<T> {
    fn default() -> Self {
        Self {
            amplitude: T::one(),
            f0: T::one(),
            tau: T::zero(),
            delta: cast(1e-3),
            t_min: cast(-2.0),
            t_max: cast(2.0),
            n: 100,
        }
    }
}

/// Sample `R(t - tau)` on the uniform grid over `[t_min, t_max]` (both
/// endpoints included) and normalize via [`normalize_signal`]. Returns the
/// grid alongside the marginal so solvers see the matching spacing.
pub fn ricker_marginal<T: Scalar>(cfg: &RickerConfig<T>) -> Result<(Grid1D<T>, Marginal1D<T>)> {
    if cfg.n < 2 {
        return Err(Error::InvalidParam { name: "n", value: cfg.n as f64 });
    }
    if !(cfg.f0 > T::zero()) {
        return Err(Error::InvalidParam { name: "f0", value: to_f64(cfg.f0) });
    }
    if cfg.delta < T::zero() {
        return Err(Error::InvalidParam { name: "delta", value: to_f64(cfg.delta) });
    }
    let grid = Grid1D::interval(cfg.n, cfg.t_min, cfg.t_max)?;
    let h = grid.spacing();
    let samples: Vec<T> = (0..cfg.n)
        .map(|i| {
            let t = cfg.t_min + cast::<T>(i as f64) * h;
            ricker(t - cfg.tau, cfg.amplitude, cfg.f0)
        })
        .collect();
    Ok((grid, normalize_signal(&samples, cfg.delta)?))
}

/// Turn a sampled signal into a probability vector:
/// `(f^2 / ||f^2||_1 + delta) / (1 + L * delta)` with `L` the sample
/// count, so the result sums to one exactly. Squaring makes the output
/// invariant under sign flips and positive rescaling of `f`.
pub fn normalize_signal<T: Scalar>(f: &[T], delta: T) -> Result<Marginal1D<T>> {
    if f.is_empty() {
        return Err(Error::ZeroSignal);
    }
    if f.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite { context: "signal samples" });
    }
    if delta < T::zero() {
        return Err(Error::InvalidParam { name: "delta", value: to_f64(delta) });
    }
    let energy: T = f.iter().map(|&x| x * x).sum();
    if energy <= T::zero() {
        return Err(Error::ZeroSignal);
    }
    let len = cast::<T>(f.len() as f64);
    let denom = T::one() + len * delta;
    let weights: Vec<T> = f.iter().map(|&x| (x * x / energy + delta) / denom).collect();
    Marginal1D::new(weights)
}

/// Seeded random marginal: entries uniform on `[0, 1)`, normalized by the
/// 1-norm. Identical seeds give identical marginals.
pub fn random_marginal<T: Scalar>(n: usize, seed: u64) -> Result<Marginal1D<T>> {
    if n == 0 {
        return Err(Error::InvalidParam { name: "n", value: 0.0 });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights: Vec<T> = (0..n).map(|_| cast(rng.gen::<f64>())).collect();
    Marginal1D::new(weights)
}

/// Seeded random 2D marginal on the unit square, filled column-major.
pub fn random_marginal_2d<T: Scalar>(n: usize, m: usize, seed: u64) -> Result<Marginal2D<T>> {
    let grid = Grid2D::unit_square(n, m)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights: Vec<T> = (0..n * m).map(|_| cast(rng.gen::<f64>())).collect();
    Marginal2D::new(weights, grid)
}

/// Convert grayscale pixels (row-major, `rows x cols`, nonnegative) into a
/// 2D marginal on the unit square: normalize by total intensity, blend in
/// `delta` uniform mass, and store column-major.
pub fn image_to_marginal<T: Scalar>(
    pixels: &[T],
    rows: usize,
    cols: usize,
    delta: T,
) -> Result<Marginal2D<T>> {
    if pixels.len() != rows * cols || rows == 0 || cols == 0 {
        return Err(Error::ShapeMismatch {
            context: "image shape",
            left: pixels.len(),
            right: rows * cols,
        });
    }
    if pixels.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite { context: "pixel values" });
    }
    if let Some((i, &p)) = pixels.iter().enumerate().find(|(_, &p)| p < T::zero()) {
        return Err(Error::NegativeMass { index: i, value: to_f64(p) });
    }
    if delta < T::zero() {
        return Err(Error::InvalidParam { name: "delta", value: to_f64(delta) });
    }
    let mass: T = pixels.iter().copied().sum();
    if mass <= T::zero() && delta <= T::zero() {
        return Err(Error::ZeroMass);
    }
    let cells = cast::<T>((rows * cols) as f64);
    let denom = T::one() + cells * delta;
    let mut weights = vec![T::zero(); rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            let base = if mass > T::zero() {
                pixels[r * cols + c] / mass
            } else {
                T::zero()
            };
            weights[c * rows + r] = (base + delta) / denom;
        }
    }
    let grid = Grid2D::unit_square(rows, cols)?;
    Marginal2D::new(weights, grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn ricker_values() {
        assert_eq!(ricker(0.0, 2.5, 1.0), 2.5);
        // Root of the polynomial factor.
        let root = 1.0 / (PI * 2.0f64.sqrt());
        assert!(ricker(root, 1.0, 1.0).abs() < 1e-15);
        // Direct formula at t = 1, A = F0 = 1.
        let expect = (1.0 - 2.0 * PI * PI) * (-PI * PI).exp();
        assert!((ricker(1.0, 1.0, 1.0) - expect).abs() < 1e-15);
    }

    #[test]
    fn ricker_is_even() {
        for &t in &[0.3, 0.77, 1.9] {
            assert_eq!(ricker(t, 1.3, 0.8), ricker(-t, 1.3, 0.8));
        }
    }

    #[test]
    fn normalize_signal_cases() {
        // delta = 0 reduces to f^2 / ||f^2||_1.
        let f = [1.0, -2.0, 3.0];
        let m = normalize_signal(&f, 0.0).unwrap();
        let energy = 1.0 + 4.0 + 9.0;
        for (w, x) in m.weights().iter().zip(&f) {
            assert!((w - x * x / energy).abs() < 1e-15);
        }

        // Constant signals give the uniform marginal for any delta.
        let m = normalize_signal(&[2.0; 5], 0.7).unwrap();
        for &w in m.weights() {
            assert!((w - 0.2).abs() < 1e-14);
        }

        assert!(matches!(normalize_signal(&[0.0, 0.0], 0.1), Err(Error::ZeroSignal)));
    }

    #[test]
    fn normalize_signal_scale_invariant() {
        let f: Vec<f64> = (0..17).map(|i| ((i as f64) * 0.37).sin()).collect();
        let scaled: Vec<f64> = f.iter().map(|x| 41.5 * x).collect();
        let a = normalize_signal(&f, 1e-3).unwrap();
        let b = normalize_signal(&scaled, 1e-3).unwrap();
        for (x, y) in a.weights().iter().zip(b.weights()) {
            assert!((x - y).abs() <= 1e-12 * y.abs());
        }
    }

    #[test]
    fn ricker_marginal_sums_to_one() {
        let cfg = RickerConfig { n: 80, ..RickerConfig::default() };
        let (grid, m) = ricker_marginal(&cfg).unwrap();
        assert_eq!(grid.n(), 80);
        assert!((grid.spacing() - 4.0 / 79.0).abs() < 1e-15);
        let sum: f64 = m.weights().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(m.weights().iter().all(|&w| w > 0.0));
    }

    #[test]
    fn random_marginal_is_deterministic_and_positive() {
        let a = random_marginal::<f64>(100, 7).unwrap();
        let b = random_marginal::<f64>(100, 7).unwrap();
        assert_eq!(a, b);
        let c = random_marginal::<f64>(100, 8).unwrap();
        assert_ne!(a, c);
        let sum: f64 = a.weights().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);

        let big = random_marginal::<f64>(100_000, 12345).unwrap();
        let min = big.weights().iter().cloned().fold(f64::INFINITY, f64::min);
        let max = big.weights().iter().cloned().fold(0.0, f64::max);
        assert!(min > 0.0);
        assert!((max / min).is_finite());
    }

    #[test]
    fn random_marginal_2d_layout() {
        let m = random_marginal_2d::<f64>(3, 4, 9).unwrap();
        assert_eq!(m.grid().n(), 3);
        assert_eq!(m.grid().m(), 4);
        assert_eq!(m.weights().len(), 12);
        let sum: f64 = m.weights().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn image_conversion_cases() {
        // All-equal pixels give the uniform marginal.
        let m = image_to_marginal(&[7.0; 12], 3, 4, 0.0).unwrap();
        for &w in m.weights() {
            assert!((w - 1.0 / 12.0).abs() < 1e-14);
        }

        // A single bright pixel with delta = 0 is a point mass, stored
        // column-major: pixel (row 1, col 2) lands at index 2*rows + 1.
        let mut px = vec![0.0; 6];
        px[1 * 3 + 2] = 5.0; // row-major input, rows = 2, cols = 3
        let m = image_to_marginal(&px, 2, 3, 0.0).unwrap();
        assert_eq!(m.weights()[2 * 2 + 1], 1.0);
        assert_eq!(m.weights().iter().filter(|&&w| w > 0.0).count(), 1);

        // Synthetic 32x32 image sums to one.
        let img: Vec<f64> = (0..32 * 32).map(|i| (i % 255) as f64).collect();
        let m = image_to_marginal(&img, 32, 32, 1e-3).unwrap();
        let sum: f64 = m.weights().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);

        assert!(matches!(
            image_to_marginal(&[0.0; 4], 2, 2, 0.0),
            Err(Error::ZeroMass)
        ));
        assert!(matches!(
            image_to_marginal(&[1.0, -1.0], 1, 2, 0.0),
            Err(Error::NegativeMass { .. })
        ));
    }
}
