//! Multifractal detrended fluctuation analysis and the regularized Legendre spectrum.
//!
//! The profile is split into `floor(N/s)` disjoint segments from the start; each
//! segment is detrended by a least-squares line (DFA-1) and the residual
//! variances are combined into moments `F_w(s)`. The generalized Hurst
//! exponent `h(w)` is the log-log slope of `F_w(s)` against `s`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::stats::{self, LinearFit};

/// Mean-centred cumulative sum `I*(i) = sum_{k <= i} (X_k - <X>)`.
pub fn profile<T: Scalar>(returns: &[T]) -> Result<Vec<T>> {
    if returns.len() < 16 {
        return Err(Error::TooShort {
            needed: 16,
            got: returns.len(),
        });
    }
    if let Some(i) = returns.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    let m = stats::mean(returns);
    let mut acc = T::zero();
    let mut out: Vec<T> = returns
        .iter()
        .map(|&x| {
            acc += x - m;
            acc
        })
        .collect();
    // the full centred sum vanishes; pin the round-off
    if let Some(last) = out.last_mut() {
        *last = T::zero();
    }
    Ok(out)
}

/// Default scale grid: 24 log-spaced scales from 16 to `N/4`.
pub fn default_scales(n: usize) -> Vec<usize> {
    stats::log_spaced(16, n / 4, 24)
}

/// Default orders `-10, -9.5, ..., 10` (zero included, handled by log-averaging).
pub fn default_orders<T: Scalar>() -> Vec<T> {
    (-20_i32..=20).map(|i| T::lit(0.5 * f64::from(i))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluctuationMatrix<T> {
    pub scales: Vec<usize>,
    pub orders: Vec<T>,
    /// `values[i][j] = F_{orders[i]}(scales[j])`.
    pub values: Vec<Vec<T>>,
    /// Segments with zero residual variance, per scale; excluded from the moments.
    pub skipped_segments: Vec<usize>,
}

impl<T: Scalar> FluctuationMatrix<T> {
    /// Long format: `scale,w,F`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "scale,w,F")?;
        for (w, row) in self.orders.iter().zip(&self.values) {
            for (s, f) in self.scales.iter().zip(row) {
                writeln!(out, "{s},{w},{f:e}")?;
            }
        }
        Ok(())
    }

    pub fn order_index(&self, w: T) -> Option<usize> {
        self.orders.iter().position(|&o| (o - w).abs() <= T::lit(1e-12))
    }
}

/// Residual variance `F^2(v, s)` of each segment around its least-squares line.
///
/// Returns `None` for a segment whose residual is zero up to round-off.
pub fn segment_variances<T: Scalar>(profile: &[T], scale: usize) -> Vec<Option<T>> {
    let s = T::of_usize(scale);
    // x = 0..s-1 centred at (s-1)/2
    let xc = (s - T::one()) / T::lit(2.0);
    let sxx = s * (s * s - T::one()) / T::lit(12.0);
    let tiny = T::epsilon() * T::lit(16.0);
    profile
        .chunks_exact(scale)
        .map(|seg| {
            let mean = stats::mean(seg);
            let mut sxy = T::zero();
            let mut scale_sq = T::zero();
            for (i, &y) in seg.iter().enumerate() {
                sxy += (T::of_usize(i) - xc) * (y - mean);
                scale_sq += y * y;
            }
            let slope = sxy / sxx;
            let ss: T = seg
                .iter()
                .enumerate()
                .map(|(i, &y)| {
                    let r = y - mean - slope * (T::of_usize(i) - xc);
                    r * r
                })
                .sum();
            let f2 = ss / s;
            if f2 <= tiny * tiny * (scale_sq / s) || !(f2 > T::zero()) {
                None
            } else {
                Some(f2)
            }
        })
        .collect()
}

/// `F_w(s) = [ (1/N_s) sum_v (F^2(v,s))^(w/2) ]^(1/w)`, evaluated in log space;
/// `w = 0` uses `exp{ (1/(2 N_s)) sum_v ln F^2(v,s) }`.
fn moment<T: Scalar>(ln_f2: &[T], w: T) -> T {
    let n = T::of_usize(ln_f2.len());
    if w == T::zero() {
        return (ln_f2.iter().copied().sum::<T>() / (T::lit(2.0) * n)).exp();
    }
    let half = w / T::lit(2.0);
    let max = ln_f2
        .iter()
        .map(|&l| half * l)
        .fold(T::neg_infinity(), T::max);
    let lse = max + ln_f2.iter().map(|&l| (half * l - max).exp()).sum::<T>().ln();
    ((lse - n.ln()) / w).exp()
}

pub fn fluctuation_matrix<T: Scalar>(profile: &[T], scales: &[usize], orders: &[T]) -> Result<FluctuationMatrix<T>> {
    let n = profile.len();
    if scales.is_empty() || orders.is_empty() {
        return Err(Error::InvalidArgument("scales and orders must be non-empty".into()));
    }
    if !scales.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::InvalidArgument("scales must be strictly increasing".into()));
    }
    if scales[0] < 4 || 4 * scales[scales.len() - 1] > n {
        return Err(Error::InvalidArgument(format!(
            "scales must lie in [4, {}] for a profile of length {n}",
            n / 4
        )));
    }
    if let Some(w) = orders.iter().find(|w| !w.is_finite()) {
        return Err(Error::InvalidArgument(format!("order {w} is not finite")));
    }
    let per_scale: Vec<Result<(Vec<T>, usize)>> = scales
        .par_iter()
        .map(|&s| {
            let vars = segment_variances(profile, s);
            let total = vars.len();
            let ln_f2: Vec<T> = vars.into_iter().flatten().map(|v| v.ln()).collect();
            if ln_f2.is_empty() {
                return Err(Error::ZeroVariance(format!(
                    "all {total} segments at scale {s} are exactly linear"
                )));
            }
            let skipped = total - ln_f2.len();
            Ok((orders.iter().map(|&w| moment(&ln_f2, w)).collect(), skipped))
        })
        .collect();
    let mut columns = Vec::with_capacity(scales.len());
    let mut skipped_segments = Vec::with_capacity(scales.len());
    for r in per_scale {
        let (col, skipped) = r?;
        columns.push(col);
        skipped_segments.push(skipped);
    }
    let values = (0..orders.len())
        .map(|i| columns.iter().map(|c| c[i]).collect())
        .collect();
    Ok(FluctuationMatrix {
        scales: scales.to_vec(),
        orders: orders.to_vec(),
        values,
        skipped_segments,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HurstProfile<T> {
    pub orders: Vec<T>,
    pub h: Vec<T>,
    pub stderr: Vec<T>,
    /// `tau(w) = w h(w) - 1`.
    pub tau: Vec<T>,
}

impl<T: Scalar> HurstProfile<T> {
    /// Builds a profile from given exponents; `tau` is derived.
    pub fn new(orders: Vec<T>, h: Vec<T>, stderr: Vec<T>) -> Result<Self> {
        if orders.len() != h.len() || orders.len() != stderr.len() {
            return Err(Error::InvalidArgument("orders, h and stderr lengths differ".into()));
        }
        let tau = orders.iter().zip(&h).map(|(&w, &h)| w * h - T::one()).collect();
        Ok(Self { orders, h, stderr, tau })
    }

    pub fn h_at(&self, w: T) -> Option<T> {
        self.orders
            .iter()
            .position(|&o| (o - w).abs() <= T::lit(1e-12))
            .map(|i| self.h[i])
    }

    /// `w,h,stderr,tau`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "w,h,stderr,tau")?;
        for i in 0..self.orders.len() {
            writeln!(
                out,
                "{},{:e},{:e},{:e}",
                self.orders[i], self.h[i], self.stderr[i], self.tau[i]
            )?;
        }
        Ok(())
    }
}

/// Per order, OLS of `ln F_w(s)` on `ln s` over scales in `[s_lo, s_hi]`.
pub fn generalized_hurst<T: Scalar>(matrix: &FluctuationMatrix<T>, fit_range: (usize, usize)) -> Result<HurstProfile<T>> {
    let (lo, hi) = fit_range;
    let idx: Vec<usize> = (0..matrix.scales.len())
        .filter(|&j| matrix.scales[j] >= lo && matrix.scales[j] <= hi)
        .collect();
    if idx.len() < 6 {
        return Err(Error::DegenerateFit(format!(
            "{} scales in fit range [{lo}, {hi}]; at least 6 needed",
            idx.len()
        )));
    }
    let xs: Vec<T> = idx.iter().map(|&j| T::of_usize(matrix.scales[j])).collect();
    let mut h = Vec::with_capacity(matrix.orders.len());
    let mut stderr = Vec::with_capacity(matrix.orders.len());
    for row in &matrix.values {
        let ys: Vec<T> = idx.iter().map(|&j| row[j]).collect();
        let fit = stats::log_log_fit(&xs, &ys)?;
        h.push(fit.slope);
        stderr.push(fit.slope_stderr);
    }
    HurstProfile::new(matrix.orders.clone(), h, stderr)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumPeak<T> {
    pub gamma: T,
    pub f: T,
    pub prominence: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LegendreSpectrum<T> {
    pub beta: T,
    /// Sorted by increasing `gamma`; `orders`, `h_beta` and `f` follow the same order.
    pub orders: Vec<T>,
    pub h_beta: Vec<T>,
    pub gamma: Vec<T>,
    pub f: Vec<T>,
    pub peaks: Vec<SpectrumPeak<T>>,
    /// Span of `gamma` over which `f >= 0`, interpolated at the zero crossings.
    pub support_width: T,
}

impl<T: Scalar> LegendreSpectrum<T> {
    /// `w,h_beta,gamma,f`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "w,h_beta,gamma,f")?;
        for i in 0..self.gamma.len() {
            writeln!(
                out,
                "{},{:e},{:e},{:e}",
                self.orders[i], self.h_beta[i], self.gamma[i], self.f[i]
            )?;
        }
        Ok(())
    }

    pub fn f_max(&self) -> T {
        self.f.iter().copied().fold(T::neg_infinity(), T::max)
    }
}

/// Minimum prominence for a local maximum of `f` to count as a peak.
pub const PEAK_PROMINENCE: f64 = 0.02;

/// Three-point derivative on a possibly non-uniform grid; one-sided at the ends.
fn derivative<T: Scalar>(x: &[T], y: &[T]) -> Vec<T> {
    let n = x.len();
    (0..n)
        .map(|i| {
            if i == 0 {
                (y[1] - y[0]) / (x[1] - x[0])
            } else if i == n - 1 {
                (y[n - 1] - y[n - 2]) / (x[n - 1] - x[n - 2])
            } else {
                let (h0, h1) = (x[i] - x[i - 1], x[i + 1] - x[i]);
                (y[i + 1] * h0 * h0 - y[i - 1] * h1 * h1 + y[i] * (h1 * h1 - h0 * h0)) / (h0 * h1 * (h0 + h1))
            }
        })
        .collect()
}

/// Local maxima with prominence at least `min_prominence`; flat tops resolve to
/// their midpoint and the two ends never count.
pub fn find_peaks<T: Scalar>(y: &[T], min_prominence: T) -> Vec<(usize, T)> {
    let n = y.len();
    let mut out = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if y[i - 1] < y[i] {
            let mut ahead = i + 1;
            while ahead < n - 1 && y[ahead] == y[i] {
                ahead += 1;
            }
            if y[ahead] < y[i] {
                let mid = (i + ahead - 1) / 2;
                let peak = y[mid];
                // prominence: lowest point on each side before higher ground
                let mut left_min = peak;
                for &v in y[..i].iter().rev() {
                    if v > peak {
                        break;
                    }
                    left_min = left_min.min(v);
                }
                let mut right_min = peak;
                for &v in &y[ahead..] {
                    if v > peak {
                        break;
                    }
                    right_min = right_min.min(v);
                }
                let prominence = peak - left_min.max(right_min);
                if prominence >= min_prominence {
                    out.push((mid, prominence));
                }
                i = ahead;
                continue;
            }
        }
        i += 1;
    }
    out
}

fn support_width<T: Scalar>(gamma: &[T], f: &[T]) -> T {
    let Some(first) = f.iter().position(|&v| v >= T::zero()) else {
        return T::zero();
    };
    let last = f.iter().rposition(|&v| v >= T::zero()).expect("first exists");
    let cross = |a: usize, b: usize| gamma[a] + (gamma[b] - gamma[a]) * f[a] / (f[a] - f[b]);
    let lo = if first == 0 { gamma[0] } else { cross(first - 1, first) };
    let hi = if last + 1 == f.len() { gamma[last] } else { cross(last, last + 1) };
    hi - lo
}

fn is_symmetric<T: Scalar>(orders: &[T]) -> bool {
    let n = orders.len();
    n >= 3
        && orders.windows(2).all(|w| w[0] < w[1])
        && (0..n).all(|i| (orders[i] + orders[n - 1 - i]).abs() <= T::lit(1e-9))
}

/// Spectrum with the cubic regularizer `h_beta(w) = beta w^3 + h(w)`.
///
/// `gamma = h_beta - w dh_beta/dw` and `f = w (gamma - h_beta) + 1`. The
/// derivative of `h` is numerical; the regularizer contributes `3 beta w^2`
/// exactly, so linear `h = a w + b` yields `gamma = b - 2 beta w^3` and
/// `f = 1 - a w^2 - 3 beta w^4` on every grid point.
pub fn legendre_spectrum<T: Scalar>(hurst: &HurstProfile<T>, beta: T) -> Result<LegendreSpectrum<T>> {
    if !(beta > T::zero()) {
        return Err(Error::InvalidArgument(format!("beta = {beta} must be positive")));
    }
    if !is_symmetric(&hurst.orders) {
        return Err(Error::InvalidArgument(
            "orders must be increasing and symmetric about zero".into(),
        ));
    }
    let w = &hurst.orders;
    let dh = derivative(w, &hurst.h);
    let three = T::lit(3.0);
    let mut rows: Vec<(T, T, T, T)> = w
        .iter()
        .zip(&hurst.h)
        .zip(&dh)
        .map(|((&w, &h), &dh)| {
            let h_beta = beta * w * w * w + h;
            let slope = three * beta * w * w + dh;
            let gamma = h_beta - w * slope;
            let f = w * (gamma - h_beta) + T::one();
            (w, h_beta, gamma, f)
        })
        .collect();
    let increasing = rows.windows(2).all(|p| p[0].2 < p[1].2);
    let decreasing = rows.windows(2).all(|p| p[0].2 > p[1].2);
    if !(increasing || decreasing) {
        return Err(Error::NonMonotonic { beta: beta.as_f64() });
    }
    if decreasing {
        rows.reverse();
    }
    let orders: Vec<T> = rows.iter().map(|r| r.0).collect();
    let h_beta: Vec<T> = rows.iter().map(|r| r.1).collect();
    let gamma: Vec<T> = rows.iter().map(|r| r.2).collect();
    let f: Vec<T> = rows.iter().map(|r| r.3).collect();
    let peaks = find_peaks(&f, T::lit(PEAK_PROMINENCE))
        .into_iter()
        .map(|(i, prominence)| SpectrumPeak {
            gamma: gamma[i],
            f: f[i],
            prominence,
        })
        .collect();
    let support_width = support_width(&gamma, &f);
    Ok(LegendreSpectrum {
        beta,
        orders,
        h_beta,
        gamma,
        f,
        peaks,
        support_width,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fractality {
    Monofractal,
    Multifractal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaSweep<T> {
    pub spectra: Vec<LegendreSpectrum<T>>,
    /// Two or more peaks at the smallest beta mean multifractal.
    pub verdict: Fractality,
}

pub fn beta_sweep<T: Scalar>(hurst: &HurstProfile<T>, betas: &[T]) -> Result<BetaSweep<T>> {
    if betas.is_empty() {
        return Err(Error::InvalidArgument("beta list is empty".into()));
    }
    if !betas.windows(2).all(|b| b[0] > b[1]) {
        return Err(Error::InvalidArgument("betas must be strictly decreasing".into()));
    }
    let spectra = betas
        .iter()
        .map(|&b| legendre_spectrum(hurst, b))
        .collect::<Result<Vec<_>>>()?;
    let last = spectra.last().expect("non-empty");
    let verdict = if last.peaks.len() >= 2 {
        Fractality::Multifractal
    } else {
        Fractality::Monofractal
    };
    Ok(BetaSweep { spectra, verdict })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultifractalityTest<T> {
    pub verdict: Fractality,
    /// Line through `h(w)` for `w < 0`.
    pub negative: LinearFit<T>,
    /// Line through `h(w)` for `w > 0`.
    pub positive: LinearFit<T>,
    pub h_range: T,
    pub threshold: T,
}

/// Maximum spread of `h(w)` still compatible with a monofractal.
pub const H_RANGE_LIMIT: f64 = 0.05;

/// The spread of `h` is measured over `|w| <= H_RANGE_ORDERS`; the extreme
/// orders carry a finite-sample tilt even for white noise.
pub const H_RANGE_ORDERS: f64 = 5.0;

/// Separate lines through `h(w)` on each side of zero; multifractal when
/// either `|slope|` exceeds `threshold` or `h` spans more than 0.05 over
/// `|w| <= 5`.
pub fn multifractality_test<T: Scalar>(hurst: &HurstProfile<T>, threshold: T) -> Result<MultifractalityTest<T>> {
    let side = |neg: bool| -> Result<LinearFit<T>> {
        let (xs, ys): (Vec<T>, Vec<T>) = hurst
            .orders
            .iter()
            .zip(&hurst.h)
            .filter(|(&w, _)| if neg { w < T::zero() } else { w > T::zero() })
            .map(|(&w, &h)| (w, h))
            .unzip();
        stats::linear_fit(&xs, &ys)
    };
    let negative = side(true)?;
    let positive = side(false)?;
    let core = || {
        hurst
            .orders
            .iter()
            .zip(&hurst.h)
            .filter(|(w, _)| w.abs() <= T::lit(H_RANGE_ORDERS))
            .map(|(_, &h)| h)
    };
    let max = core().fold(T::neg_infinity(), T::max);
    let min = core().fold(T::infinity(), T::min);
    let h_range = max - min;
    let multi = negative.slope.abs() > threshold
        || positive.slope.abs() > threshold
        || h_range > T::lit(H_RANGE_LIMIT);
    Ok(MultifractalityTest {
        verdict: if multi {
            Fractality::Multifractal
        } else {
            Fractality::Monofractal
        },
        negative,
        positive,
        h_range,
        threshold,
    })
}
