//! Return construction, rolling volatility and moving-average detrending.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::PriceSeries;
use crate::scalar::Scalar;
use crate::stats;

/// Consecutive differences `x(t) = I(t+1) - I(t)` of a (possibly detrended) index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnSeries<T> {
    pub values: Vec<T>,
    pub dt_minutes: u32,
    pub detrended: bool,
}

impl<T: Scalar> ReturnSeries<T> {
    pub fn new(values: Vec<T>, dt_minutes: u32, detrended: bool) -> Self {
        Self {
            values,
            dt_minutes,
            detrended,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// All returns `X(t0, t) = I(t0 + t) - I(t0)` for a fixed lag `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnEnsemble<T> {
    pub lag: usize,
    pub values: Vec<T>,
}

/// `original = trend + residual`, element-wise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendDecomposition<T> {
    pub trend: Vec<T>,
    pub residual: Vec<T>,
    pub window: usize,
}

pub fn increments<T: Scalar>(series: &PriceSeries<T>) -> Result<ReturnSeries<T>> {
    Ok(ReturnSeries::new(
        differences(&series.values)?,
        series.dt_minutes,
        false,
    ))
}

/// Increments of the detrended index (the residual of a decomposition).
pub fn detrended_increments<T: Scalar>(
    decomposition: &TrendDecomposition<T>,
    dt_minutes: u32,
) -> Result<ReturnSeries<T>> {
    Ok(ReturnSeries::new(
        differences(&decomposition.residual)?,
        dt_minutes,
        true,
    ))
}

pub fn differences<T: Scalar>(levels: &[T]) -> Result<Vec<T>> {
    if levels.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: levels.len(),
        });
    }
    Ok(levels.windows(2).map(|w| w[1] - w[0]).collect())
}

pub fn return_ensemble<T: Scalar>(series: &PriceSeries<T>, lag: usize) -> Result<ReturnEnsemble<T>> {
    lagged_returns(&series.values, lag)
}

/// Lagged differences of a level sequence; the sequence need not be positive.
pub fn lagged_returns<T: Scalar>(levels: &[T], lag: usize) -> Result<ReturnEnsemble<T>> {
    if lag == 0 {
        return Err(Error::InvalidArgument("lag must be positive".into()));
    }
    if lag >= levels.len() {
        return Err(Error::InvalidArgument(format!(
            "lag {lag} must be smaller than the series length {}",
            levels.len()
        )));
    }
    Ok(ReturnEnsemble {
        lag,
        values: levels[lag..]
            .iter()
            .zip(levels)
            .map(|(&later, &earlier)| later - earlier)
            .collect(),
    })
}

/// Sample standard deviation (`N - 1`) over each window `returns[i..i + window]`.
pub fn rolling_volatility<T: Scalar>(returns: &[T], window: usize) -> Result<Vec<T>> {
    if window < 2 {
        return Err(Error::InvalidArgument("volatility window must be >= 2".into()));
    }
    if window > returns.len() {
        return Err(Error::TooShort {
            needed: window,
            got: returns.len(),
        });
    }
    Ok(returns.windows(window).map(stats::sample_std).collect())
}

/// Three-piece centred moving average with window `t_w`.
///
/// With 1-based time `t` and length `N`, the interior (`t_w/2 <= t <= N - t_w/2`)
/// averages `I(t+k)` for `k` in `-floor((t_w-1)/2) ..= ceil((t_w-1)/2)`. Near the
/// start (`t < t_w/2`) the lower bound is truncated to `k = 1 - t`; near the end
/// (`t > N - t_w/2`) the upper bound becomes `k = N - t`. Every piece divides by
/// the number of samples actually summed. For even `t_w` that count equals
/// the boundary prefactors `(t_w + 2t)/2` and `(2N - 2t + t_w)/2`; for odd
/// `t_w` those prefactors are half a sample off and the count is used instead.
pub fn moving_average_trend<T: Scalar>(values: &[T], window: usize) -> Result<TrendDecomposition<T>> {
    let n = values.len();
    if window == 0 || window > n {
        return Err(Error::InvalidArgument(format!(
            "detrend window {window} must lie in 1..={n}"
        )));
    }
    let below = (window - 1) / 2; // floor((t_w - 1) / 2)
    let above = window / 2; // ceil((t_w - 1) / 2)

    // prefix sums with a zero in front; compensated to keep long sums accurate
    let mut prefix = Vec::with_capacity(n + 1);
    let mut sum = T::zero();
    let mut carry = T::zero();
    prefix.push(sum);
    for &v in values {
        let y = v - carry;
        let t = sum + y;
        carry = (t - sum) - y;
        sum = t;
        prefix.push(sum);
    }

    let two = T::lit(2.0);
    let tw = T::of_usize(window);
    let nn = T::of_usize(n);
    let trend: Vec<T> = (1..=n)
        .map(|t| {
            let tt = T::of_usize(t);
            let (lo, hi) = if two * tt < tw {
                (1, t + above)
            } else if two * tt > two * nn - tw {
                (t - below, n)
            } else {
                (t - below, t + above)
            };
            let (lo, hi) = (lo.max(1), hi.min(n));
            (prefix[hi] - prefix[lo - 1]) / T::of_usize(hi - lo + 1)
        })
        .collect();
    let residual = values.iter().zip(&trend).map(|(&v, &m)| v - m).collect();
    Ok(TrendDecomposition {
        trend,
        residual,
        window,
    })
}
