//! Anomalous diffusion: PDF-peak scaling, two-regime power laws and PDF collapse.
//!
//! For a self-similar process `P(x, t) = t^-H F(x t^-H)`, so the density peak
//! decays as `P_max(t) ~ t^-H` and `sqrt(<x^2>) ~ t^H`. The anomalous-diffusion
//! exponent is `alpha = 1/H`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{self, Bandwidth, EmpiricalPdf, SemilogOptions};
use crate::error::{Error, Result};
use crate::ingest::PriceSeries;
use crate::optim;
use crate::scalar::Scalar;
use crate::series;
use crate::stats::{self, LinearFit};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakScalingCurve<T> {
    pub lags: Vec<usize>,
    /// Maximum of the kernel density estimate of each return ensemble.
    pub peaks: Vec<T>,
    /// Raw second moment `<x^2>` of each ensemble.
    pub msd: Vec<T>,
    /// Density at `x = 0`, for comparison with the grid maximum.
    pub density_at_zero: Vec<T>,
}

impl<T: Scalar> PeakScalingCurve<T> {
    pub fn len(&self) -> usize {
        self.lags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lags.is_empty()
    }

    /// `lag,lag_minutes,p_max,msd,p_zero`.
    pub fn write_csv<W: Write>(&self, mut out: W, dt_minutes: u32) -> std::io::Result<()> {
        writeln!(out, "lag,lag_minutes,p_max,msd,p_zero")?;
        for i in 0..self.lags.len() {
            writeln!(
                out,
                "{},{},{:e},{:e},{:e}",
                self.lags[i],
                self.lags[i] as u64 * u64::from(dt_minutes),
                self.peaks[i],
                self.msd[i],
                self.density_at_zero[i]
            )?;
        }
        Ok(())
    }
}

/// Default lag grid: 48 log-spaced lags from 1 to 46 000, cut to `< len / 4`.
pub fn default_lags(series_len: usize) -> Vec<usize> {
    stats::log_spaced(1, 46_000, 48)
        .into_iter()
        .filter(|&l| 4 * l < series_len)
        .collect()
}

/// Peak scaling of a price series; see [`peak_scaling_levels`].
pub fn peak_scaling<T: Scalar>(
    series: &PriceSeries<T>,
    lags: &[usize],
    bandwidth: &Bandwidth,
    grid_size: usize,
) -> Result<PeakScalingCurve<T>> {
    peak_scaling_levels(&series.values, lags, bandwidth, grid_size)
}

/// For each lag, the KDE peak and second moment of `I(t0 + t) - I(t0)`.
///
/// `levels` may take any sign, which admits detrended indices and simulated
/// walks. Lags must be strictly increasing and below `levels.len() / 4`.
pub fn peak_scaling_levels<T: Scalar>(
    levels: &[T],
    lags: &[usize],
    bandwidth: &Bandwidth,
    grid_size: usize,
) -> Result<PeakScalingCurve<T>> {
    if lags.is_empty() {
        return Err(Error::InvalidArgument("lag list is empty".into()));
    }
    if lags[0] == 0 || !lags.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::InvalidArgument("lags must be positive and strictly increasing".into()));
    }
    let max = lags[lags.len() - 1];
    if 4 * max >= levels.len() {
        return Err(Error::TooShort {
            needed: 4 * max + 1,
            got: levels.len(),
        });
    }
    let points: Vec<Result<(T, T, T)>> = lags
        .par_iter()
        .map(|&lag| {
            let ensemble = series::lagged_returns(levels, lag)?;
            let x = &ensemble.values;
            if !(stats::sample_variance(x) > T::zero()) {
                return Err(Error::ZeroVariance(format!("return ensemble at lag {lag} is constant")));
            }
            let h = bandwidth.resolve(x)?;
            let pdf = density::kde(x, h, grid_size)?;
            let msd = x.iter().map(|&v| v * v).sum::<T>() / T::of_usize(x.len());
            Ok((pdf.peak().1, msd, pdf.value_at(T::zero())))
        })
        .collect();
    let mut curve = PeakScalingCurve {
        lags: lags.to_vec(),
        peaks: Vec::with_capacity(lags.len()),
        msd: Vec::with_capacity(lags.len()),
        density_at_zero: Vec::with_capacity(lags.len()),
    };
    for p in points {
        let (peak, msd, p0) = p?;
        curve.peaks.push(peak);
        curve.msd.push(msd);
        curve.density_at_zero.push(p0);
    }
    Ok(curve)
}

/// `H` and its standard error from a single line through `ln P_max` vs `ln t`.
pub fn fit_peak_hurst<T: Scalar>(curve: &PeakScalingCurve<T>) -> Result<(T, T)> {
    let t: Vec<T> = curve.lags.iter().map(|&l| T::of_usize(l)).collect();
    let fit = stats::log_log_fit(&t, &curve.peaks)?;
    Ok((-fit.slope, fit.slope_stderr))
}

/// `H` and its standard error from `sqrt(<x^2>) ~ t^H`.
pub fn fit_msd_hurst<T: Scalar>(curve: &PeakScalingCurve<T>) -> Result<(T, T)> {
    let t: Vec<T> = curve.lags.iter().map(|&l| T::of_usize(l)).collect();
    let rms: Vec<T> = curve.msd.iter().map(|m| m.sqrt()).collect();
    let fit = stats::log_log_fit(&t, &rms)?;
    Ok((fit.slope, fit.slope_stderr))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoRegimeFit<T> {
    pub h_short: T,
    pub h_long: T,
    /// First lag of the long regime.
    pub breakpoint: usize,
    pub stderr_short: T,
    pub stderr_long: T,
    pub alpha_short: T,
    pub alpha_long: T,
    /// Total residual sum of squares in log space.
    pub sse: T,
    pub intercept_short: T,
    pub intercept_long: T,
}

/// Minimum number of lags on each side of the breakpoint.
pub const MIN_POINTS_PER_REGIME: usize = 4;

/// Breakpoint grid search over `ln P_max = c - H ln t` fitted on each side.
///
/// The breakpoint minimizing the total SSE wins; ties go to the smaller lag.
pub fn fit_two_regime<T: Scalar>(curve: &PeakScalingCurve<T>) -> Result<TwoRegimeFit<T>> {
    let n = curve.len();
    if n < 2 * MIN_POINTS_PER_REGIME {
        return Err(Error::TooShort {
            needed: 2 * MIN_POINTS_PER_REGIME,
            got: n,
        });
    }
    if let Some(i) = curve.peaks.iter().position(|&p| !(p > T::zero())) {
        return Err(Error::DegenerateFit(format!("peak at lag {} is not positive", curve.lags[i])));
    }
    let lx: Vec<T> = curve.lags.iter().map(|&l| T::of_usize(l).ln()).collect();
    let ly: Vec<T> = curve.peaks.iter().map(|p| p.ln()).collect();
    let mut best: Option<(T, usize, LinearFit<T>, LinearFit<T>)> = None;
    for k in MIN_POINTS_PER_REGIME..=n - MIN_POINTS_PER_REGIME {
        let short = stats::linear_fit(&lx[..k], &ly[..k])?;
        let long = stats::linear_fit(&lx[k..], &ly[k..])?;
        let sse = short.sse + long.sse;
        if best.as_ref().is_none_or(|b| sse < b.0) {
            best = Some((sse, k, short, long));
        }
    }
    let (sse, k, short, long) = best.expect("at least one candidate");
    let (h_short, h_long) = (-short.slope, -long.slope);
    if !(h_short > T::zero() && h_long > T::zero()) {
        return Err(Error::DegenerateFit(format!(
            "peak decay exponents must be positive (short {h_short}, long {h_long})"
        )));
    }
    Ok(TwoRegimeFit {
        h_short,
        h_long,
        breakpoint: curve.lags[k],
        stderr_short: short.slope_stderr,
        stderr_long: long.slope_stderr,
        alpha_short: T::one() / h_short,
        alpha_long: T::one() / h_long,
        sse,
        intercept_short: short.intercept,
        intercept_long: long.intercept,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffusionRegime {
    Subdiffusion,
    Normal,
    Superdiffusion,
}

/// `alpha > 2 + tol` is subdiffusive, `alpha < 2 - tol` superdiffusive.
pub fn classify_regime<T: Scalar>(alpha: T, tolerance: T) -> DiffusionRegime {
    let two = T::lit(2.0);
    if alpha > two + tolerance {
        DiffusionRegime::Subdiffusion
    } else if alpha < two - tolerance {
        DiffusionRegime::Superdiffusion
    } else {
        DiffusionRegime::Normal
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseResult<T> {
    pub lags: Vec<usize>,
    /// Fitted width `beta(t)` of each PDF under the shared `q`.
    pub scale_factors: Vec<T>,
    pub master_q: T,
    /// Largest pairwise sup-distance between rescaled PDFs on the common grid.
    pub collapse_distance: T,
    /// Log-log slope of `beta(t)` against `t`; equals `H` under exact scaling.
    pub scale_exponent: T,
    /// `D` in `beta = (D t)^H` for the supplied `H`, geometric mean over lags.
    pub diffusion_constant: T,
    pub grid: Vec<T>,
    /// Rescaled densities `beta P(beta u)` on `grid`, one row per lag.
    pub rescaled: Vec<Vec<T>>,
}

impl<T: Scalar> CollapseResult<T> {
    /// Long format `lag,u,density` plus the master q-Gaussian as `lag = 0`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "lag,u,density")?;
        for (lag, row) in self.lags.iter().zip(&self.rescaled) {
            for (u, d) in self.grid.iter().zip(row) {
                writeln!(out, "{lag},{u:e},{d:e}")?;
            }
        }
        for &u in &self.grid {
            let g = density::g_q(u, self.master_q).unwrap_or(T::nan());
            writeln!(out, "0,{u:e},{g:e}")?;
        }
        Ok(())
    }
}

/// Points on the common rescaled grid.
const COLLAPSE_GRID: usize = 512;

/// Best `ln beta` for a fixed `q`, and its SSE.
fn fit_scale<T: Scalar>(xs: &[T], ln_d: &[T], q: T, peak: T) -> Result<(T, T)> {
    let center = -density::ln_c_q(q)? - peak.ln();
    let (ln_beta, sse) = optim::brent(
        |lb| density::semilog_sse(xs, ln_d, q, lb.exp()),
        center - T::lit(3.0),
        center + T::lit(3.0),
        T::lit(1e-10),
        200,
    );
    Ok((ln_beta, sse))
}

/// Joint semi-log fit with one `q` for all PDFs and one width per PDF, then
/// rescaling `u = x / beta`, `density -> beta P`.
pub fn collapse_pdfs<T: Scalar>(pdfs: &[(usize, EmpiricalPdf<T>)], hurst: T) -> Result<CollapseResult<T>> {
    if pdfs.is_empty() {
        return Err(Error::InvalidArgument("no PDFs to collapse".into()));
    }
    if !(hurst > T::zero() && hurst < T::one()) {
        return Err(Error::InvalidArgument(format!("H = {hurst} must lie in (0, 1)")));
    }
    let options = SemilogOptions::default();
    let supports = pdfs
        .iter()
        .map(|(_, pdf)| {
            let (xs, ys) = density::semilog_support(pdf, options.min_rel_density)?;
            Ok((xs, ys, pdf.peak().1))
        })
        .collect::<Result<Vec<_>>>()?;

    let total_sse = |q: T| -> T {
        supports
            .iter()
            .map(|(xs, ys, peak)| fit_scale(xs, ys, q, *peak).map_or(T::infinity(), |r| r.1))
            .sum()
    };
    // coarse scan brackets the shared q, Brent polishes it
    let (q_lo, q_hi) = (density::Q_FIT_MIN, density::Q_FIT_MAX);
    let steps = 40;
    let grid_q: Vec<T> = (0..=steps)
        .map(|i| T::lit(q_lo + (q_hi - q_lo) * i as f64 / steps as f64))
        .collect();
    let scores: Vec<T> = grid_q.iter().map(|&q| total_sse(q)).collect();
    let best = (0..scores.len())
        .min_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(std::cmp::Ordering::Equal))
        .expect("non-empty scan");
    if !scores[best].is_finite() {
        return Err(Error::DegenerateFit("no finite q-Gaussian fit for the PDF set".into()));
    }
    let a = grid_q[best.saturating_sub(1)];
    let b = grid_q[(best + 1).min(steps)];
    let (master_q, _) = optim::brent(total_sse, a, b, T::lit(1e-10), 200);

    let mut scale_factors = Vec::with_capacity(pdfs.len());
    for (xs, ys, peak) in &supports {
        scale_factors.push(fit_scale(xs, ys, master_q, *peak)?.0.exp());
    }

    // common grid: overlap of the rescaled supports
    let mut lo = T::neg_infinity();
    let mut hi = T::infinity();
    for ((_, pdf), &beta) in pdfs.iter().zip(&scale_factors) {
        lo = lo.max(pdf.grid[0] / beta);
        hi = hi.min(pdf.grid[pdf.grid.len() - 1] / beta);
    }
    if !(hi > lo) {
        return Err(Error::DegenerateFit("rescaled PDFs do not overlap".into()));
    }
    let step = (hi - lo) / T::of_usize(COLLAPSE_GRID - 1);
    let grid: Vec<T> = (0..COLLAPSE_GRID).map(|i| lo + step * T::of_usize(i)).collect();
    let rescaled: Vec<Vec<T>> = pdfs
        .iter()
        .zip(&scale_factors)
        .map(|((_, pdf), &beta)| grid.iter().map(|&u| beta * pdf.value_at(u * beta)).collect())
        .collect();
    let collapse_distance = grid
        .iter()
        .enumerate()
        .map(|(j, _)| {
            let col = rescaled.iter().map(|r| r[j]);
            let max = col.clone().fold(T::neg_infinity(), T::max);
            let min = col.fold(T::infinity(), T::min);
            max - min
        })
        .fold(T::zero(), T::max);

    let lags: Vec<usize> = pdfs.iter().map(|(l, _)| *l).collect();
    let scale_exponent = if lags.len() >= 2 && lags.windows(2).any(|w| w[0] != w[1]) {
        let t: Vec<T> = lags.iter().map(|&l| T::of_usize(l)).collect();
        stats::log_log_fit(&t, &scale_factors)?.slope
    } else {
        T::nan()
    };
    let ln_d = lags
        .iter()
        .zip(&scale_factors)
        .map(|(&l, &b)| b.ln() / hurst - T::of_usize(l).ln())
        .sum::<T>()
        / T::of_usize(lags.len());
    Ok(CollapseResult {
        lags,
        scale_factors,
        master_q,
        collapse_distance,
        scale_exponent,
        diffusion_constant: ln_d.exp(),
        grid,
        rescaled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn power_curve(h: f64, c: f64) -> PeakScalingCurve<f64> {
        let lags: Vec<usize> = (1..=12).map(|i| 1 << i).collect();
        let peaks = lags.iter().map(|&l| c * (l as f64).powf(-h)).collect();
        let msd = vec![1.0; lags.len()];
        PeakScalingCurve {
            density_at_zero: vec![1.0; lags.len()],
            lags,
            peaks,
            msd,
        }
    }

    #[test]
    fn exact_power_law() {
        let f = fit_two_regime(&power_curve(0.5, 1.0)).unwrap();
        assert!((f.h_short - 0.5).abs() < 1e-12 && (f.h_long - 0.5).abs() < 1e-12);
        assert!(f.sse < 1e-20);
        assert!((f.alpha_short * f.h_short - 1.0).abs() < 1e-12);
    }

    #[test]
    fn broken_power_law_finds_the_break() {
        let mut c = power_curve(0.4, 1.0);
        for i in 6..c.lags.len() {
            let (t, t0) = (c.lags[i] as f64, c.lags[6] as f64);
            c.peaks[i] = 1.3 * t0.powf(-0.4) * (t / t0).powf(-0.65);
        }
        let f = fit_two_regime(&c).unwrap();
        assert_eq!(f.breakpoint, c.lags[6]);
        assert!((f.h_short - 0.4).abs() < 1e-10 && (f.h_long - 0.65).abs() < 1e-10);
        let scaled = PeakScalingCurve {
            peaks: c.peaks.iter().map(|p| 7.5 * p).collect(),
            ..c.clone()
        };
        let g = fit_two_regime(&scaled).unwrap();
        assert_eq!(g.breakpoint, f.breakpoint);
        assert!((g.h_long - f.h_long).abs() < 1e-10);
    }

    #[test]
    fn too_few_points() {
        let mut c = power_curve(0.5, 1.0);
        c.lags.truncate(7);
        c.peaks.truncate(7);
        assert!(fit_two_regime(&c).is_err());
    }

    #[test]
    fn regimes() {
        assert_eq!(classify_regime(2.41, 0.05), DiffusionRegime::Subdiffusion);
        assert_eq!(classify_regime(2.0, 0.05), DiffusionRegime::Normal);
        assert_eq!(classify_regime(1.54, 0.05), DiffusionRegime::Superdiffusion);
    }

    #[test]
    fn ramp_has_point_mass_ensembles() {
        let ramp: Vec<f64> = (0..400).map(|i| i as f64).collect();
        assert!(matches!(
            peak_scaling_levels(&ramp, &[1, 5], &Bandwidth::Silverman, 256),
            Err(Error::ZeroVariance(_))
        ));
        assert!(peak_scaling_levels(&ramp, &[100], &Bandwidth::Silverman, 256).is_err());
    }

    fn gaussian_pdf(sigma: f64) -> EmpiricalPdf<f64> {
        let grid: Vec<f64> = (0..2001).map(|i| -8.0 * sigma + 16.0 * sigma * i as f64 / 2000.0).collect();
        let density = grid
            .iter()
            .map(|&x| (-x * x / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt()))
            .collect();
        EmpiricalPdf::from_parts(grid, density, sigma / 100.0, 1000).unwrap()
    }

    #[test]
    fn gaussian_collapse() {
        let pdfs: Vec<(usize, EmpiricalPdf<f64>)> =
            [1, 4, 16, 64].iter().map(|&t| (t, gaussian_pdf((t as f64).sqrt()))).collect();
        let c = collapse_pdfs(&pdfs, 0.5).unwrap();
        assert!(c.collapse_distance < 0.01, "{}", c.collapse_distance);
        assert!((c.scale_exponent - 0.5).abs() < 1e-3);
        assert!(c.master_q < 1.01);

        let single = collapse_pdfs(&pdfs[..1], 0.5).unwrap();
        assert_eq!(single.collapse_distance, 0.0);
    }
}
