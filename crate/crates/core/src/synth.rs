//! Seeded reference processes with known exponents.
//!
//! All generators draw from a ChaCha8 stream seeded with [`Seed`], so the
//! output is a pure function of the parameters and the seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::series::ReturnSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Seed(pub u64);

impl Seed {
    fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

/// iid `N(0, sigma^2)` samples.
pub fn gaussian_white<T: Scalar>(n: usize, sigma: T, seed: Seed) -> Result<ReturnSeries<T>> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    if !(sigma > T::zero()) {
        return Err(Error::InvalidArgument("sigma must be positive".into()));
    }
    let mut rng = seed.rng();
    let values = (0..n)
        .map(|_| sigma * T::lit(rng.sample::<f64, _>(StandardNormal)))
        .collect();
    Ok(ReturnSeries::new(values, 1, false))
}

/// Autocovariance of unit-variance fractional Gaussian noise at lag `k`.
pub fn fgn_autocovariance<T: Scalar>(k: usize, hurst: T) -> T {
    let two_h = T::lit(2.0) * hurst;
    let k = T::of_usize(k);
    let half = T::lit(0.5);
    half * ((k + T::one()).powf(two_h) - T::lit(2.0) * k.powf(two_h) + (k - T::one()).abs().powf(two_h))
}

/// Unit-variance fractional Gaussian noise by circulant embedding.
///
/// The autocovariance for lags `0..=n` is embedded in a circulant of size `2n`
/// whose eigenvalues are non-negative for every `H` in `(0, 1)`; the real part
/// of the spectrally coloured complex noise then has exactly the target
/// covariance. The cumulative sum is fractional Brownian motion.
pub fn fgn<T: Scalar>(n: usize, hurst: T, seed: Seed) -> Result<ReturnSeries<T>> {
    if !(hurst > T::zero() && hurst < T::one()) {
        return Err(Error::InvalidArgument(format!("H = {hurst} must lie in (0, 1)")));
    }
    if n < 2 || !n.is_power_of_two() {
        return Err(Error::InvalidArgument(format!("n = {n} must be a power of two >= 2")));
    }
    let m = 2 * n;
    let mut row: Vec<Complex<T>> = (0..m)
        .map(|j| {
            let k = if j <= n { j } else { m - j };
            Complex::new(fgn_autocovariance(k, hurst), T::zero())
        })
        .collect();
    let mut planner = FftPlanner::<T>::new();
    let fft = planner.plan_fft_forward(m);
    fft.process(&mut row);

    let mut rng = seed.rng();
    let scale = T::one() / T::of_usize(m);
    let mut spectrum: Vec<Complex<T>> = row
        .iter()
        .map(|eig| {
            // tiny negative round-off is clipped
            let amp = (eig.re.max(T::zero()) * scale).sqrt();
            let re = T::lit(rng.sample::<f64, _>(StandardNormal));
            let im = T::lit(rng.sample::<f64, _>(StandardNormal));
            Complex::new(amp * re, amp * im)
        })
        .collect();
    fft.process(&mut spectrum);
    let values = spectrum[..n].iter().map(|c| c.re).collect();
    Ok(ReturnSeries::new(values, 1, false))
}

/// iid draws with density `g_q` (generalized Box–Müller).
///
/// With `q' = (1 + q) / (3 - q)` and uniforms `u1, u2`,
/// `z = sqrt(-2 ln_q'(u1)) cos(2 pi u2)` is a q-Gaussian with density
/// proportional to `[1 + (q-1) z^2 / (3-q)]^(1/(1-q))`; dividing by
/// `sqrt(3 - q)` maps it onto `g_q`. Variance is infinite for `q >= 5/3`.
pub fn q_gaussian_sample<T: Scalar>(n: usize, q: T, seed: Seed) -> Result<Vec<T>> {
    if !(q > T::one() && q < T::lit(3.0)) {
        return Err(Error::InvalidArgument(format!("q = {q} must lie in (1, 3)")));
    }
    let qf = q.as_f64();
    let q_prime = (1.0 + qf) / (3.0 - qf);
    let ln_qp = |u: f64| {
        if (q_prime - 1.0).abs() < 1e-12 {
            u.ln()
        } else {
            (u.powf(1.0 - q_prime) - 1.0) / (1.0 - q_prime)
        }
    };
    let norm = (3.0 - qf).sqrt();
    let mut rng = seed.rng();
    let out = (0..n)
        .map(|_| {
            // (0, 1]: keeps ln_q' finite
            let u1: f64 = 1.0 - rng.random::<f64>();
            let u2: f64 = rng.random::<f64>();
            let r = (-2.0 * ln_qp(u1)).sqrt();
            T::lit(r * (std::f64::consts::TAU * u2).cos() / norm)
        })
        .collect();
    Ok(out)
}

/// Stationary AR(1): `X_{t+1} = phi X_t + e_t`, `e ~ N(0, 1)`,
/// `X_0 ~ N(0, 1 / (1 - phi^2))`.
pub fn ar1<T: Scalar>(n: usize, phi: T, seed: Seed) -> Result<ReturnSeries<T>> {
    if !(phi.abs() < T::one()) {
        return Err(Error::InvalidArgument(format!("|phi| = {} must be < 1", phi.abs())));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    let mut rng = seed.rng();
    let mut draw = || T::lit(rng.sample::<f64, _>(StandardNormal));
    let mut values = Vec::with_capacity(n);
    let mut x = draw() / (T::one() - phi * phi).sqrt();
    values.push(x);
    for _ in 1..n {
        x = phi * x + draw();
        values.push(x);
    }
    Ok(ReturnSeries::new(values, 1, false))
}

/// Running sum of increments, starting at `start`.
pub fn cumulative<T: Scalar>(increments: &[T], start: T) -> Vec<T> {
    let mut level = start;
    std::iter::once(start)
        .chain(increments.iter().map(|&x| {
            level += x;
            level
        }))
        .collect()
}
