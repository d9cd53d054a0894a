//! Sample and chopping autocorrelation, power-law Hurst extraction, memory time.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::series::ReturnSeries;
use crate::stats::{self, LinearFit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcfKind {
    Sample,
    Chopping,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcfCurve<T> {
    /// Lags in grid units, `0..=max_lag`.
    pub lags: Vec<usize>,
    pub values: Vec<T>,
    /// Cross-segment standard error; chopping curves only.
    pub stderr: Option<Vec<T>>,
    pub kind: AcfKind,
    pub dt_minutes: u32,
    pub segments_used: usize,
    /// Zero-variance segments left out of the chopping average.
    pub segments_dropped: usize,
}

impl<T: Scalar> AcfCurve<T> {
    pub fn max_lag(&self) -> usize {
        self.lags.last().copied().unwrap_or(0)
    }

    /// Columns `s_minutes,C,stderr`; `stderr` is empty for sample curves.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "s_minutes,C,stderr")?;
        for (i, (&s, c)) in self.lags.iter().zip(&self.values).enumerate() {
            let minutes = s as u64 * u64::from(self.dt_minutes);
            match &self.stderr {
                Some(se) => writeln!(out, "{minutes},{c:e},{:e}", se[i])?,
                None => writeln!(out, "{minutes},{c:e},")?,
            }
        }
        Ok(())
    }
}

/// ACF of a centred slice: products up to `max_lag` over the full sum of squares.
fn centred_acf<T: Scalar>(xs: &[T], max_lag: usize) -> Option<Vec<T>> {
    let m = stats::mean(xs);
    let centred: Vec<T> = xs.iter().map(|&x| x - m).collect();
    let denom: T = centred.iter().map(|&d| d * d).sum();
    if !(denom > T::zero()) {
        return None;
    }
    let values = (0..=max_lag)
        .map(|s| {
            if s == 0 {
                return T::one();
            }
            let num: T = centred[s..].iter().zip(&centred).map(|(&a, &b)| a * b).sum();
            num / denom
        })
        .collect();
    Some(values)
}

/// `C(s) = sum_t (X_t - m)(X_{t+s} - m) / sum_t (X_t - m)^2` with the global mean `m`.
pub fn sample_acf<T: Scalar>(returns: &ReturnSeries<T>, max_lag: usize) -> Result<AcfCurve<T>> {
    let n = returns.len();
    if max_lag == 0 || 2 * max_lag >= n {
        return Err(Error::InvalidArgument(format!(
            "max_lag {max_lag} must lie in 1..{}",
            n.div_ceil(2)
        )));
    }
    if let Some(i) = returns.values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    let values = centred_acf(&returns.values, max_lag)
        .ok_or_else(|| Error::ZeroVariance("return series is constant".into()))?;
    Ok(AcfCurve {
        lags: (0..=max_lag).collect(),
        values,
        stderr: None,
        kind: AcfKind::Sample,
        dt_minutes: returns.dt_minutes,
        segments_used: 1,
        segments_dropped: 0,
    })
}

/// Average of per-segment ACFs over `floor(N / S)` disjoint segments of length `S`.
///
/// Each segment uses its own mean and variance. Constant segments are left out
/// and counted in `segments_dropped`; at least two usable segments are needed.
pub fn chopped_acf<T: Scalar>(
    returns: &ReturnSeries<T>,
    segment_length: usize,
    max_lag: usize,
) -> Result<AcfCurve<T>> {
    let n = returns.len();
    if segment_length < 2 || 2 * segment_length > n {
        return Err(Error::InvalidArgument(format!(
            "segment length {segment_length} needs at least two segments in {n} samples"
        )));
    }
    if max_lag == 0 || 2 * max_lag >= segment_length {
        return Err(Error::InvalidArgument(format!(
            "max_lag {max_lag} must lie in 1..{}",
            segment_length.div_ceil(2)
        )));
    }
    let per_segment: Vec<Option<Vec<T>>> = returns
        .values
        .par_chunks_exact(segment_length)
        .map(|seg| centred_acf(seg, max_lag))
        .collect();
    let total = per_segment.len();
    let curves: Vec<Vec<T>> = per_segment.into_iter().flatten().collect();
    let used = curves.len();
    if used < 2 {
        return Err(Error::TooShort { needed: 2, got: used });
    }
    let count = T::of_usize(used);
    let mut values = Vec::with_capacity(max_lag + 1);
    let mut stderr = Vec::with_capacity(max_lag + 1);
    for s in 0..=max_lag {
        // offsets from the first segment: identical segments give exactly zero spread
        let anchor = curves[0][s];
        let offsets: Vec<T> = curves.iter().map(|c| c[s] - anchor).collect();
        values.push(anchor + stats::mean(&offsets));
        stderr.push(stats::sample_std(&offsets) / count.sqrt());
    }
    Ok(AcfCurve {
        lags: (0..=max_lag).collect(),
        values,
        stderr: Some(stderr),
        kind: AcfKind::Chopping,
        dt_minutes: returns.dt_minutes,
        segments_used: used,
        segments_dropped: total - used,
    })
}

/// OLS of `ln |C(s)|` on `ln s` for `s` in `[s_lo, s_hi]`.
pub fn fit_abs_acf_slope<T: Scalar>(curve: &AcfCurve<T>, s_lo: usize, s_hi: usize) -> Result<LinearFit<T>> {
    if s_lo < 1 || s_lo >= s_hi || s_hi > curve.max_lag() {
        return Err(Error::InvalidArgument(format!(
            "fit range [{s_lo}, {s_hi}] must satisfy 1 <= lo < hi <= {}",
            curve.max_lag()
        )));
    }
    let (xs, ys): (Vec<T>, Vec<T>) = curve
        .lags
        .iter()
        .zip(&curve.values)
        .filter(|(&s, _)| s >= s_lo && s <= s_hi)
        .map(|(&s, &c)| (T::of_usize(s), c.abs()))
        .unzip();
    if let Some(i) = ys.iter().position(|&c| c == T::zero()) {
        return Err(Error::DegenerateFit(format!("C(s) is zero at lag {}", s_lo + i)));
    }
    stats::log_log_fit(&xs, &ys)
}

/// `H = 1 + slope / 2`, i.e. `|C(s)| ~ s^(2H - 2)`.
pub fn hurst_from_acf_slope<T: Scalar>(slope: T) -> Result<T> {
    if !(slope > T::lit(-2.0) && slope < T::zero()) {
        return Err(Error::InvalidArgument(format!("ACF slope {slope} must lie in (-2, 0)")));
    }
    Ok(T::one() + slope / T::lit(2.0))
}

/// `tau_c = (1 / C(0)) * integral_0^max_lag C(s) ds`, trapezoidal, in grid units.
pub fn memory_time<T: Scalar>(curve: &AcfCurve<T>) -> Result<T> {
    let last = *curve
        .values
        .last()
        .ok_or(Error::TooShort { needed: 2, got: 0 })?;
    if curve.values.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: curve.values.len(),
        });
    }
    if last.abs() >= T::lit(0.01) {
        return Err(Error::NotConverged {
            iterations: curve.max_lag(),
        });
    }
    let xs: Vec<T> = curve.lags.iter().map(|&s| T::of_usize(s)).collect();
    Ok(stats::trapezoid(&xs, &curve.values) / curve.values[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(values: Vec<f64>) -> ReturnSeries<f64> {
        ReturnSeries::new(values, 10, false)
    }

    #[test]
    fn lag_zero_is_one() {
        let c = sample_acf(&series(vec![1.0, 3.0, 2.0, 5.0, 4.0, 0.0]), 2).unwrap();
        assert_eq!(c.values[0], 1.0);
        assert!(sample_acf(&series(vec![1.0; 6]), 2).is_err());
        assert!(sample_acf(&series(vec![1.0, 2.0, 3.0, 4.0]), 2).is_err());
    }

    #[test]
    fn alternating_sequence() {
        let x: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let c = sample_acf(&series(x), 3).unwrap();
        assert!((c.values[1] + 0.99).abs() < 1e-12);
        assert!((c.values[2] - 0.98).abs() < 1e-12);
    }

    #[test]
    fn repeated_segments_have_zero_stderr() {
        let seg = [0.3, -1.0, 2.0, 0.5, -0.7, 1.1, 0.0, -0.2];
        let x: Vec<f64> = seg.iter().cycle().take(64).copied().collect();
        let c = chopped_acf(&series(x), 8, 3).unwrap();
        assert_eq!(c.segments_used, 8);
        assert!(c.stderr.unwrap().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn constant_segments_are_dropped() {
        let mut x: Vec<f64> = (0..40).map(|i| ((i * 7) % 5) as f64).collect();
        x[10..20].fill(2.0);
        let c = chopped_acf(&series(x), 10, 2).unwrap();
        assert_eq!((c.segments_used, c.segments_dropped), (3, 1));
        assert!(chopped_acf(&series(vec![1.0; 30]), 20, 2).is_err());
    }

    #[test]
    fn hurst_mapping() {
        assert_eq!(hurst_from_acf_slope(-1.0_f64).unwrap(), 0.5);
        assert!((hurst_from_acf_slope(-1.17_f64).unwrap() - 0.415).abs() < 1e-12);
        assert!((hurst_from_acf_slope(-1.07_f64).unwrap() - 0.465).abs() < 1e-12);
        assert!(hurst_from_acf_slope(0.1_f64).is_err());
        assert!(hurst_from_acf_slope(-2.0_f64).is_err());
    }

    #[test]
    fn exponential_memory_time() {
        let lags: Vec<usize> = (0..=200).collect();
        let dense = 100.0;
        let values: Vec<f64> = lags.iter().map(|&s| (-(s as f64) / dense / 5.0).exp()).collect();
        let curve = AcfCurve {
            lags,
            values,
            stderr: None,
            kind: AcfKind::Sample,
            dt_minutes: 1,
            segments_used: 1,
            segments_dropped: 0,
        };
        // lag units are 1/100: rescale the integral
        assert!(memory_time(&curve).is_err());
        let lags: Vec<usize> = (0..=5000).collect();
        let values: Vec<f64> = lags.iter().map(|&s| (-(s as f64) / dense / 5.0).exp()).collect();
        let curve = AcfCurve { lags, values, ..curve };
        assert!((memory_time(&curve).unwrap() / dense - 5.0).abs() < 1e-3);
    }
}
