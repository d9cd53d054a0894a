//! Small descriptive-statistics and regression helpers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub fn mean<T: Scalar>(xs: &[T]) -> T {
    if xs.is_empty() {
        return T::nan();
    }
    xs.iter().copied().sum::<T>() / T::of_usize(xs.len())
}

/// Sample variance with the `N - 1` divisor.
pub fn sample_variance<T: Scalar>(xs: &[T]) -> T {
    if xs.len() < 2 {
        return T::nan();
    }
    let m = mean(xs);
    let ss: T = xs.iter().map(|&x| (x - m) * (x - m)).sum();
    ss / T::of_usize(xs.len() - 1)
}

pub fn sample_std<T: Scalar>(xs: &[T]) -> T {
    sample_variance(xs).sqrt()
}

/// Trapezoidal integral of `ys` sampled at `xs`.
pub fn trapezoid<T: Scalar>(xs: &[T], ys: &[T]) -> T {
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| (x[1] - x[0]) * (y[0] + y[1]) * T::lit(0.5))
        .sum()
}

/// Ordinary least-squares line `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit<T> {
    pub slope: T,
    pub intercept: T,
    /// Standard error of the slope (zero for an exact fit).
    pub slope_stderr: T,
    /// Residual sum of squares.
    pub sse: T,
    pub r_squared: T,
    pub n: usize,
}

pub fn linear_fit<T: Scalar>(xs: &[T], ys: &[T]) -> Result<LinearFit<T>> {
    if xs.len() != ys.len() {
        return Err(Error::InvalidArgument(format!(
            "x and y lengths differ ({} vs {})",
            xs.len(),
            ys.len()
        )));
    }
    let n = xs.len();
    if n < 2 {
        return Err(Error::TooShort { needed: 2, got: n });
    }
    if let Some(i) = xs.iter().chain(ys).position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i % n));
    }
    let mx = mean(xs);
    let my = mean(ys);
    let mut sxx = T::zero();
    let mut sxy = T::zero();
    let mut syy = T::zero();
    for (&x, &y) in xs.iter().zip(ys) {
        let dx = x - mx;
        let dy = y - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx <= T::zero() {
        return Err(Error::DegenerateFit("all x values identical".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: T = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    let slope_stderr = if n > 2 {
        (sse / T::of_usize(n - 2) / sxx).sqrt()
    } else {
        T::zero()
    };
    let r_squared = if syy > T::zero() {
        T::one() - sse / syy
    } else {
        T::one()
    };
    Ok(LinearFit {
        slope,
        intercept,
        slope_stderr,
        sse,
        r_squared,
        n,
    })
}

/// Power-law fit `y ~ x^slope` via OLS on natural logs.
pub fn log_log_fit<T: Scalar>(xs: &[T], ys: &[T]) -> Result<LinearFit<T>> {
    if let Some(i) = xs.iter().chain(ys).position(|v| *v <= T::zero()) {
        return Err(Error::DegenerateFit(format!(
            "non-positive value at index {} in log-log fit",
            i % xs.len().max(1)
        )));
    }
    let lx: Vec<T> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<T> = ys.iter().map(|y| y.ln()).collect();
    linear_fit(&lx, &ly)
}

/// Up to `count` log-spaced integers in `[lo, hi]`, deduplicated and increasing.
pub fn log_spaced(lo: usize, hi: usize, count: usize) -> Vec<usize> {
    if lo == 0 || hi < lo || count == 0 {
        return Vec::new();
    }
    if count == 1 || lo == hi {
        return vec![lo];
    }
    let (a, b) = ((lo as f64).ln(), (hi as f64).ln());
    let mut out: Vec<usize> = (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp().round() as usize)
        .map(|v| v.clamp(lo, hi))
        .collect();
    out.dedup();
    out
}
