//! Stylized-facts analysis of high-frequency price series.
//!
//! The crate covers the full chain from raw ticks to scaling exponents:
//!
//! - [`ingest`]: CSV parsing, uniform-grid resampling, period segmentation
//! - [`series`]: returns, rolling volatility, moving-average detrending
//! - [`density`]: kernel density estimation and q-Gaussian calibration
//! - [`diffusion`]: PDF-peak scaling, two-regime power laws, PDF collapse
//! - [`autocorr`]: sample and chopping autocorrelation, memory time
//! - [`mfdfa`]: multifractal DFA, generalized Hurst exponents, Legendre spectrum
//! - [`synth`]: seeded reference processes with known exponents
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the `*64`
//! aliases below fix the common `f64` instantiation.

// `!(x > 0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autocorr;
pub mod density;
pub mod diffusion;
pub mod error;
pub mod ingest;
pub mod mfdfa;
pub mod optim;
pub mod scalar;
pub mod series;
pub mod special;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type PriceSeries64 = ingest::PriceSeries<f64>;
pub type RawTickTable64 = ingest::RawTickTable<f64>;
pub type ReturnSeries64 = series::ReturnSeries<f64>;
pub type ReturnEnsemble64 = series::ReturnEnsemble<f64>;
pub type TrendDecomposition64 = series::TrendDecomposition<f64>;
pub type EmpiricalPdf64 = density::EmpiricalPdf<f64>;
pub type QGaussianFit64 = density::QGaussianFit<f64>;
pub type TailFit64 = density::TailFit<f64>;
pub type PeakScalingCurve64 = diffusion::PeakScalingCurve<f64>;
pub type TwoRegimeFit64 = diffusion::TwoRegimeFit<f64>;
pub type CollapseResult64 = diffusion::CollapseResult<f64>;
pub type AcfCurve64 = autocorr::AcfCurve<f64>;
pub type FluctuationMatrix64 = mfdfa::FluctuationMatrix<f64>;
pub type HurstProfile64 = mfdfa::HurstProfile<f64>;
pub type LegendreSpectrum64 = mfdfa::LegendreSpectrum<f64>;
