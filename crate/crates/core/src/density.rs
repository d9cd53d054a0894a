//! Kernel density estimation and q-Gaussian calibration.
//!
//! The q-Gaussian used throughout is
//!
//! ```text
//! g_q(x) = [1 - (1 - q) x^2]^(1 / (1 - q)) / C_q,
//! C_q    = sqrt(pi / (q - 1)) * Gamma((3 - q) / (2 (q - 1))) / Gamma(1 / (q - 1)),
//! ```
//!
//! for `1 < q < 3`. It reduces to `exp(-x^2) / sqrt(pi)` as `q -> 1` and to the
//! Cauchy density at `q = 2`. Its tails decay as `|x|^(2 / (1 - q))`.
//!
//! Two independent calibrations are provided: a global least-squares fit of
//! `ln P` on a semi-log scale ([`fit_q_gaussian_semilog`]) and a log-log
//! regression of the right tail ([`fit_tail_exponent`] + [`q_from_tail`]).

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{self, Bounds};
use crate::scalar::Scalar;
use crate::special::ln_gamma;
use crate::stats;

/// Density of the grid relative to the kernel: the grid step never exceeds the bandwidth.
const MAX_GRID_POINTS: usize = 1 << 22;
/// Grid padding beyond the sample range, in bandwidths.
const GRID_PAD: f64 = 5.0;
/// Kernel support, in bandwidths.
const KERNEL_CUTOFF: f64 = 8.0;

/// Lowest and highest q the fitters explore.
pub const Q_FIT_MIN: f64 = 1.0001;
pub const Q_FIT_MAX: f64 = 2.9999;
/// A fitted q closer than this to either bound is reported as pinned.
const Q_PIN_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalPdf<T> {
    pub grid: Vec<T>,
    pub density: Vec<T>,
    pub bandwidth: T,
    pub n_samples: usize,
}

impl<T: Scalar> EmpiricalPdf<T> {
    /// Wraps an externally computed density. Checks shape only; no
    /// normalization requirement is imposed on analytic or rescaled curves.
    pub fn from_parts(grid: Vec<T>, density: Vec<T>, bandwidth: T, n_samples: usize) -> Result<Self> {
        if grid.len() != density.len() {
            return Err(Error::InvalidArgument("grid and density lengths differ".into()));
        }
        if grid.len() < 2 {
            return Err(Error::TooShort {
                needed: 2,
                got: grid.len(),
            });
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("grid must be strictly increasing".into()));
        }
        if let Some(i) = density.iter().position(|d| !(d.is_finite() && *d >= T::zero())) {
            return Err(Error::InvalidArgument(format!("density at {i} is negative or non-finite")));
        }
        Ok(Self {
            grid,
            density,
            bandwidth,
            n_samples,
        })
    }

    pub fn integral(&self) -> T {
        stats::trapezoid(&self.grid, &self.density)
    }

    /// Grid maximum `(x, P_max)`.
    pub fn peak(&self) -> (T, T) {
        let (i, _) = self
            .density
            .iter()
            .enumerate()
            .fold((0, T::neg_infinity()), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) });
        (self.grid[i], self.density[i])
    }

    /// Linear interpolation; zero outside the grid.
    pub fn value_at(&self, x: T) -> T {
        let g = &self.grid;
        if x < g[0] || x > g[g.len() - 1] {
            return T::zero();
        }
        let j = g.partition_point(|&v| v <= x).min(g.len() - 1).max(1);
        let (x0, x1) = (g[j - 1], g[j]);
        let (y0, y1) = (self.density[j - 1], self.density[j]);
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }

    /// Two-column plot data `x,density`.
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "density"])?;
        for (x, d) in self.grid.iter().zip(&self.density) {
            w.write_record([x.to_string(), d.to_string()])?;
        }
        w.flush()
    }
}

/// Gaussian-kernel density on a uniform grid.
///
/// The grid spans `[min - 5h, max + 5h]` with at least `grid_size` points and
/// is refined until the step is no larger than the bandwidth `h`, which keeps
/// the trapezoidal integral within `1e-3` of one.
pub fn kde<T: Scalar>(samples: &[T], bandwidth: T, grid_size: usize) -> Result<EmpiricalPdf<T>> {
    if samples.len() < 10 {
        return Err(Error::TooShort {
            needed: 10,
            got: samples.len(),
        });
    }
    if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    if !(bandwidth.is_finite() && bandwidth > T::zero()) {
        return Err(Error::InvalidArgument("bandwidth must be positive".into()));
    }
    let (min, max) = samples
        .iter()
        .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let pad = T::lit(GRID_PAD) * bandwidth;
    let lo = min - pad;
    let hi = max + pad;
    let needed = ((hi - lo) / bandwidth).ceil().to_usize().unwrap_or(usize::MAX).saturating_add(1);
    let points = grid_size.max(needed).max(2);
    if points > MAX_GRID_POINTS {
        return Err(Error::InvalidArgument(format!(
            "bandwidth too small for the sample range: {points} grid points needed (limit {MAX_GRID_POINTS})"
        )));
    }
    let step = (hi - lo) / T::of_usize(points - 1);
    let grid: Vec<T> = (0..points).map(|j| lo + step * T::of_usize(j)).collect();

    // Fixed-size chunks reduced in order keep the sum independent of thread count.
    const CHUNK: usize = 8192;
    let d = step / bandwidth;
    let decay = (-d * d).exp();
    let cutoff = T::lit(KERNEL_CUTOFF) * bandwidth;
    let partials: Vec<Vec<T>> = samples
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = vec![T::zero(); points];
            for &x in chunk {
                let first = ((x - cutoff - lo) / step).ceil().max(T::zero());
                let last = ((x + cutoff - lo) / step).floor().min(T::of_usize(points - 1));
                let (j0, j1) = (first.to_usize().unwrap_or(0), last.to_usize().unwrap_or(0));
                if j0 > j1 {
                    continue;
                }
                // exp(-(u0 + k d)^2 / 2) by multiplicative recurrence
                let u0 = (grid[j0] - x) / bandwidth;
                let mut g = (-T::lit(0.5) * u0 * u0).exp();
                let mut ratio = (-u0 * d - T::lit(0.5) * d * d).exp();
                for slot in &mut acc[j0..=j1] {
                    *slot += g;
                    g *= ratio;
                    ratio *= decay;
                }
            }
            acc
        })
        .collect();
    let mut density = vec![T::zero(); points];
    for part in &partials {
        for (a, &p) in density.iter_mut().zip(part) {
            *a += p;
        }
    }
    let norm = T::one() / (T::of_usize(samples.len()) * bandwidth * T::TAU().sqrt());
    for v in &mut density {
        *v *= norm;
    }
    Ok(EmpiricalPdf {
        grid,
        density,
        bandwidth,
        n_samples: samples.len(),
    })
}

/// How the KDE bandwidth is chosen for a sample.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule", content = "value")]
pub enum Bandwidth {
    /// Fixed bandwidth in raw sample units.
    Raw(f64),
    /// Multiple of the sample standard deviation.
    Normalized(f64),
    /// Silverman's rule of thumb, `0.9 min(sd, IQR/1.34) n^(-1/5)`.
    #[default]
    Silverman,
}

impl Bandwidth {
    pub fn resolve<T: Scalar>(&self, samples: &[T]) -> Result<T> {
        let h = match *self {
            Bandwidth::Raw(h) => T::lit(h),
            Bandwidth::Normalized(c) => T::lit(c) * stats::sample_std(samples),
            Bandwidth::Silverman => {
                let sd = stats::sample_std(samples);
                let mut sorted = samples.to_vec();
                sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
                let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
                let spread = if iqr > T::zero() { sd.min(iqr / T::lit(1.34)) } else { sd };
                T::lit(0.9) * spread * T::of_usize(samples.len()).powf(T::lit(-0.2))
            }
        };
        if !(h.is_finite() && h > T::zero()) {
            return Err(Error::ZeroVariance(format!(
                "bandwidth rule {self:?} gives a non-positive bandwidth"
            )));
        }
        Ok(h)
    }
}

/// Linear-interpolated quantile of sorted data.
pub fn quantile_sorted<T: Scalar>(sorted: &[T], p: f64) -> T {
    let n = sorted.len();
    if n == 0 {
        return T::nan();
    }
    let pos = p.clamp(0.0, 1.0) * (n - 1) as f64;
    let i = pos.floor() as usize;
    let frac = T::lit(pos - i as f64);
    if i + 1 >= n {
        sorted[n - 1]
    } else {
        sorted[i] + (sorted[i + 1] - sorted[i]) * frac
    }
}

fn check_q<T: Scalar>(q: T) -> Result<()> {
    if !(q > T::one() && q < T::lit(3.0)) {
        return Err(Error::InvalidArgument(format!("q = {q} must lie in (1, 3)")));
    }
    Ok(())
}

/// `ln C_q`.
pub fn ln_c_q<T: Scalar>(q: T) -> Result<T> {
    check_q(q)?;
    let qm1 = q - T::one();
    let half = T::lit(0.5);
    Ok(half * (T::PI() / qm1).ln() + ln_gamma((T::lit(3.0) - q) / (T::lit(2.0) * qm1))
        - ln_gamma(T::one() / qm1))
}

/// Normalization constant `C_q`.
pub fn c_q<T: Scalar>(q: T) -> Result<T> {
    Ok(ln_c_q(q)?.exp())
}

/// `ln g_q(x)`.
pub fn ln_g_q<T: Scalar>(x: T, q: T) -> Result<T> {
    let ln_c = ln_c_q(q)?;
    Ok(ln_g_q_with(x, q, ln_c))
}

#[inline]
fn ln_g_q_with<T: Scalar>(x: T, q: T, ln_c: T) -> T {
    let qm1 = q - T::one();
    -(qm1 * x * x).ln_1p() / qm1 - ln_c
}

/// Normalized q-Gaussian density `g_q(x)`.
pub fn g_q<T: Scalar>(x: T, q: T) -> Result<T> {
    Ok(ln_g_q(x, q)?.exp())
}

/// Scaled density `(1/beta) g_q(x / beta)`.
pub fn scaled_g_q<T: Scalar>(x: T, q: T, scale: T) -> Result<T> {
    Ok((ln_g_q(x / scale, q)? - scale.ln()).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    Semilog,
    Tail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QGaussianFit<T> {
    pub q: T,
    /// Width `beta`: the fitted density is `(1/beta) g_q(x/beta)`.
    pub scale: T,
    pub r_squared: T,
    pub method: FitMethod,
    /// Set when `q` ended within `1e-3` of the search bounds.
    pub q_at_bound: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemilogOptions {
    /// Grid points below this fraction of the peak density are excluded.
    pub min_rel_density: f64,
    /// Convergence tolerance on the log-space sum of squares.
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for SemilogOptions {
    fn default() -> Self {
        Self {
            min_rel_density: 1e-3,
            tolerance: 1e-8,
            max_iter: 4000,
        }
    }
}

/// Points of `pdf` admitted to a semi-log fit, as `(x, ln P)`.
pub(crate) fn semilog_support<T: Scalar>(pdf: &EmpiricalPdf<T>, min_rel_density: f64) -> Result<(Vec<T>, Vec<T>)> {
    let (_, peak) = pdf.peak();
    if !(peak > T::zero()) {
        return Err(Error::DegenerateFit("density peak is not positive".into()));
    }
    let floor = peak * T::lit(min_rel_density);
    let (xs, ys): (Vec<T>, Vec<T>) = pdf
        .grid
        .iter()
        .zip(&pdf.density)
        .filter(|(_, &d)| d > T::zero() && d >= floor)
        .map(|(&x, &d)| (x, d.ln()))
        .unzip();
    if xs.len() < 5 {
        return Err(Error::TooShort {
            needed: 5,
            got: xs.len(),
        });
    }
    Ok((xs, ys))
}

/// Sum of squared log-residuals of `(1/beta) g_q(x/beta)` against `(xs, ln_d)`.
pub(crate) fn semilog_sse<T: Scalar>(xs: &[T], ln_d: &[T], q: T, scale: T) -> T {
    let ln_c = match ln_c_q(q) {
        Ok(v) => v,
        Err(_) => return T::infinity(),
    };
    let ln_scale = scale.ln();
    xs.iter()
        .zip(ln_d)
        .map(|(&x, &y)| {
            let r = y - (ln_g_q_with(x / scale, q, ln_c) - ln_scale);
            r * r
        })
        .sum()
}

fn log_r_squared<T: Scalar>(ln_d: &[T], sse: T) -> T {
    let m = stats::mean(ln_d);
    let sst: T = ln_d.iter().map(|&y| (y - m) * (y - m)).sum();
    if sst > T::zero() {
        (T::one() - sse / sst).max(T::zero()).min(T::one())
    } else {
        T::one()
    }
}

/// Least-squares fit of `ln P` against `ln[(1/beta) g_q(x/beta)]` over `(q, beta)`.
///
/// Bounded Nelder–Mead over `(q, ln beta)`, started from q = 1.2, 1.5 and 2.0
/// with beta matched to the observed peak, then polished by a restart from
/// the best vertex. Equal minima resolve to the lower q.
pub fn fit_q_gaussian_semilog<T: Scalar>(pdf: &EmpiricalPdf<T>, options: &SemilogOptions) -> Result<QGaussianFit<T>> {
    let (xs, ln_d) = semilog_support(pdf, options.min_rel_density)?;
    let (_, peak) = pdf.peak();
    let objective = |p: &[T]| semilog_sse(&xs, &ln_d, p[0], p[1].exp());
    let bounds = Bounds {
        lower: vec![T::lit(Q_FIT_MIN), T::lit(-700.0)],
        upper: vec![T::lit(Q_FIT_MAX), T::lit(700.0)],
    };
    let tol = T::lit(options.tolerance);
    let step = [T::lit(0.1), T::lit(0.2)];

    let mut best: Option<optim::Minimum<T>> = None;
    for q0 in [1.2, 1.5, 2.0] {
        let q0 = T::lit(q0);
        // (1/beta) g_q(0) = P_max
        let ln_beta0 = -ln_c_q(q0)? - peak.ln();
        let m = optim::nelder_mead(objective, &[q0, ln_beta0], &step, &bounds, tol, options.max_iter);
        let better = match &best {
            None => true,
            Some(b) => m.value < b.value || (m.value == b.value && m.x[0] < b.x[0]),
        };
        if better {
            best = Some(m);
        }
    }
    let best = best.expect("three starts");
    let polished = optim::nelder_mead(objective, &best.x, &[T::lit(0.01), T::lit(0.01)], &bounds, tol, options.max_iter);
    let result = if polished.value <= best.value { polished } else { best };
    if !result.converged || !result.value.is_finite() {
        return Err(Error::NotConverged {
            iterations: result.iterations,
        });
    }
    let q = result.x[0];
    let margin = T::lit(Q_PIN_MARGIN);
    Ok(QGaussianFit {
        q,
        scale: result.x[1].exp(),
        r_squared: log_r_squared(&ln_d, result.value),
        method: FitMethod::Semilog,
        q_at_bound: q - T::lit(Q_FIT_MIN) < margin || T::lit(Q_FIT_MAX) - q < margin,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailFit<T> {
    /// Log-log slope `m` of the right tail (negative).
    pub slope: T,
    pub intercept: T,
    pub fit_range: (T, T),
    pub stderr: T,
    pub points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailOptions {
    /// Outer fraction of the reliable positive-x range that is fitted.
    pub tail_fraction: f64,
    /// Densities below this are treated as unresolved. `None` derives the
    /// floor from the sample count: the density at which a kernel window of
    /// width `2h` holds about ten samples.
    pub min_density: Option<f64>,
}

impl Default for TailOptions {
    fn default() -> Self {
        Self {
            tail_fraction: 0.25,
            min_density: None,
        }
    }
}

const TAIL_KERNEL_COUNT: f64 = 10.0;

/// OLS of `ln P` on `ln x` over the right tail.
///
/// The reliable range runs from the origin out to the last grid point of the
/// contiguous run of densities above the floor (see [`TailOptions`]); the fit
/// uses its outer `tail_fraction`.
pub fn fit_tail_exponent<T: Scalar>(pdf: &EmpiricalPdf<T>, options: &TailOptions) -> Result<TailFit<T>> {
    if !(options.tail_fraction > 0.0 && options.tail_fraction < 0.5 + f64::EPSILON) {
        return Err(Error::InvalidArgument("tail_fraction must lie in (0, 0.5]".into()));
    }
    let floor = match options.min_density {
        Some(f) => T::lit(f),
        None => T::lit(TAIL_KERNEL_COUNT) / (T::of_usize(pdf.n_samples.max(1)) * T::lit(2.0) * pdf.bandwidth),
    };
    let start = pdf.grid.partition_point(|&x| x <= T::zero());
    let (peak_x, _) = pdf.peak();
    let from = start.max(pdf.grid.partition_point(|&x| x < peak_x));
    let mut end = from;
    while end < pdf.grid.len() && pdf.density[end] > floor && pdf.density[end] > T::zero() {
        end += 1;
    }
    if end == from {
        return Err(Error::DegenerateFit("no resolved density on the positive axis".into()));
    }
    let x_hi = pdf.grid[end - 1];
    let x_lo = x_hi * T::lit(1.0 - options.tail_fraction);
    let (xs, ys): (Vec<T>, Vec<T>) = (start..end)
        .filter(|&i| pdf.grid[i] >= x_lo && pdf.grid[i] > T::zero())
        .map(|i| (pdf.grid[i], pdf.density[i]))
        .unzip();
    if xs.len() < 10 {
        return Err(Error::TooShort {
            needed: 10,
            got: xs.len(),
        });
    }
    if ys.iter().any(|&d| d <= T::zero()) {
        return Err(Error::DegenerateFit("tail contains zero densities".into()));
    }
    let fit = stats::log_log_fit(&xs, &ys)?;
    if !(fit.slope < T::zero()) {
        return Err(Error::DegenerateFit(format!("tail slope {} is not negative", fit.slope)));
    }
    Ok(TailFit {
        slope: fit.slope,
        intercept: fit.intercept,
        fit_range: (xs[0], xs[xs.len() - 1]),
        stderr: fit.slope_stderr,
        points: xs.len(),
    })
}

/// Inverts the tail law `P ~ x^(2/(1-q))`: `q = 1 - 2/m`.
pub fn q_from_tail<T: Scalar>(slope: T) -> Result<T> {
    if !(slope < T::zero()) {
        return Err(Error::InvalidArgument(format!("tail slope {slope} must be negative")));
    }
    Ok(T::one() - T::lit(2.0) / slope)
}

/// Tail-route calibration: fit the tail and convert the slope to q.
pub fn fit_q_gaussian_tail<T: Scalar>(pdf: &EmpiricalPdf<T>, options: &TailOptions) -> Result<(TailFit<T>, T)> {
    let tail = fit_tail_exponent(pdf, options)?;
    let q = q_from_tail(tail.slope)?;
    Ok((tail, q))
}

/// Normal density with the PDF's own mean and a least-squares width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianFit<T> {
    pub mean: T,
    pub sigma: T,
    /// Coefficient of determination in linear density space.
    pub r_squared: T,
}

/// Fits `N(mu, sigma^2)` to `pdf` by least squares on the density values.
///
/// `mu` is fixed at the first moment of the estimate; `sigma` is found by
/// Brent's method on `ln sigma` within a decade of the second-moment width.
pub fn fit_gaussian<T: Scalar>(pdf: &EmpiricalPdf<T>) -> Result<GaussianFit<T>> {
    let total = pdf.integral();
    if !(total > T::zero()) {
        return Err(Error::DegenerateFit("density integrates to zero".into()));
    }
    let weighted: Vec<T> = pdf.grid.iter().zip(&pdf.density).map(|(&x, &d)| x * d).collect();
    let mean = stats::trapezoid(&pdf.grid, &weighted) / total;
    let second: Vec<T> = pdf
        .grid
        .iter()
        .zip(&pdf.density)
        .map(|(&x, &d)| (x - mean) * (x - mean) * d)
        .collect();
    let sigma0 = (stats::trapezoid(&pdf.grid, &second) / total).sqrt();
    if !(sigma0 > T::zero()) {
        return Err(Error::DegenerateFit("density has zero width".into()));
    }
    let norm = (T::lit(2.0) * T::PI()).sqrt();
    let sse = |ln_sigma: T| -> T {
        let sigma = ln_sigma.exp();
        pdf.grid
            .iter()
            .zip(&pdf.density)
            .map(|(&x, &d)| {
                let z = (x - mean) / sigma;
                let r = d - (-(z * z) / T::lit(2.0)).exp() / (sigma * norm);
                r * r
            })
            .sum()
    };
    let ln0 = sigma0.ln();
    let ten = T::lit(10.0).ln();
    let (ln_sigma, best) = optim::brent(sse, ln0 - ten, ln0 + ten, T::lit(1e-10), 200);
    let m = stats::mean(&pdf.density);
    let sst: T = pdf.density.iter().map(|&d| (d - m) * (d - m)).sum();
    let r_squared = if sst > T::zero() { T::one() - best / sst } else { T::one() };
    Ok(GaussianFit {
        mean,
        sigma: ln_sigma.exp(),
        r_squared,
    })
}
