//! TOML run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stylized_core::density::Bandwidth;
use stylized_core::ingest::{self, ColumnMap, PeriodSpec};

use crate::CliError;

/// Overrides `input` when set.
pub const ENV_INPUT: &str = "STYLIZED_INPUT";
/// Overrides `output_dir` when set.
pub const ENV_OUTPUT: &str = "STYLIZED_OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub input: PathBuf,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub column_map: ColumnMap,
    #[serde(default = "default_pair")]
    pub default_pair: String,
    #[serde(default = "default_dt")]
    pub dt_minutes: u32,
    #[serde(default = "default_max_gap")]
    pub max_gap: usize,
    /// Reject ticks whose move from the last accepted price exceeds this.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jump_filter: Option<f64>,
    /// Empty means the whole series is one period named "all".
    #[serde(default)]
    pub periods: Vec<PeriodSpec>,
    #[serde(default)]
    pub volatility: VolatilityConfig,
    #[serde(default)]
    pub kde: KdeConfig,
    #[serde(default)]
    pub diffusion: DiffusionConfig,
    #[serde(default)]
    pub acf: AcfConfig,
    #[serde(default)]
    pub detrend: DetrendConfig,
    #[serde(default)]
    pub mfdfa: MfdfaConfig,
}

fn default_pair() -> String {
    "BTC/USD".into()
}

fn default_dt() -> u32 {
    10
}

fn default_max_gap() -> usize {
    6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VolatilityConfig {
    /// Rolling window in samples.
    pub window: usize,
}

impl Default for VolatilityConfig {
    fn default() -> Self {
        Self { window: 6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KdeConfig {
    pub bandwidth: Bandwidth,
    /// Minimum grid size; refined automatically for narrow kernels.
    pub grid_size: usize,
}

impl Default for KdeConfig {
    fn default() -> Self {
        Self {
            bandwidth: Bandwidth::Silverman,
            grid_size: 2048,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiffusionConfig {
    /// Peak-scaling lags in samples; empty picks log-spaced defaults.
    pub lags: Vec<usize>,
    /// Half-width around alpha = 2 still called normal diffusion.
    pub regime_tolerance: f64,
    /// Outer fraction of the resolved tail used by the tail fit.
    pub tail_fraction: f64,
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        Self {
            lags: Vec::new(),
            regime_tolerance: 0.05,
            tail_fraction: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcfConfig {
    pub max_lag: usize,
    pub segment_length: usize,
    /// Inclusive lag range of the |C(s)| power-law fit.
    pub fit_range: (usize, usize),
}

impl Default for AcfConfig {
    fn default() -> Self {
        Self {
            max_lag: 20,
            segment_length: 1000,
            fit_range: (1, 9),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetrendConfig {
    /// Moving-average window t_w in samples.
    pub window: usize,
    /// Candidate windows for `sweep-detrend`.
    pub sweep: Vec<usize>,
    /// Large lags whose detrended PDFs must look Gaussian.
    pub sweep_lags: Vec<usize>,
    pub r2_threshold: f64,
    /// Lags whose detrended PDFs are collapsed.
    pub collapse_lags: Vec<usize>,
    /// Hurst exponent used for the collapse; unset takes the short-regime H.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub collapse_hurst: Option<f64>,
}

impl Default for DetrendConfig {
    fn default() -> Self {
        Self {
            window: 1008,
            sweep: vec![6, 36, 144, 1008, 4032, 26208],
            sweep_lags: vec![100, 250, 500],
            r2_threshold: 0.95,
            collapse_lags: vec![1, 2, 5, 10, 20, 50, 100],
            collapse_hurst: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MfdfaInput {
    Trended,
    Detrended,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MfdfaConfig {
    pub input: MfdfaInput,
    /// Empty picks log-spaced scales from 16 to N/4.
    pub scales: Vec<usize>,
    /// Empty picks -10..=10 in steps of 0.5.
    pub orders: Vec<f64>,
    /// Inclusive scale range of the h(w) fits; unset uses every scale.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit_range: Option<(usize, usize)>,
    pub betas: Vec<f64>,
    /// Minimum |slope| of h(w) on either side that counts as multifractal.
    pub slope_threshold: f64,
}

impl Default for MfdfaConfig {
    fn default() -> Self {
        Self {
            input: MfdfaInput::Trended,
            scales: Vec::new(),
            orders: Vec::new(),
            fit_range: None,
            betas: vec![1.0, 0.1, 0.01, 0.001],
            slope_threshold: 0.01,
        }
    }
}

fn strictly_increasing(xs: &[usize]) -> bool {
    xs.windows(2).all(|w| w[0] < w[1])
}

impl RunConfig {
    /// Reads, applies environment overrides and validates.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut config = Self::from_toml(&text)?;
        config.apply_env();
        config.validate()?;
        Ok(config)
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn apply_env(&mut self) {
        if let Some(p) = std::env::var_os(ENV_INPUT) {
            self.input = p.into();
        }
        if let Some(p) = std::env::var_os(ENV_OUTPUT) {
            self.output_dir = p.into();
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |m: String| Err(CliError::Config(m));
        if self.dt_minutes == 0 {
            return fail("dt_minutes must be positive".into());
        }
        if let Some(j) = self.jump_filter {
            if !(j.is_finite() && j > 0.0) {
                return fail("jump_filter must be positive".into());
            }
        }
        ingest::validate_periods(&self.periods).map_err(|e| CliError::Config(e.to_string()))?;
        if self.volatility.window < 2 {
            return fail("volatility.window must be >= 2".into());
        }
        if let Bandwidth::Raw(h) | Bandwidth::Normalized(h) = self.kde.bandwidth {
            if !(h.is_finite() && h > 0.0) {
                return fail("kde.bandwidth value must be positive".into());
            }
        }
        if self.kde.grid_size < 16 {
            return fail("kde.grid_size must be >= 16".into());
        }

        let d = &self.diffusion;
        if d.lags.first() == Some(&0) || !strictly_increasing(&d.lags) {
            return fail("diffusion.lags must be positive and strictly increasing".into());
        }
        if !d.lags.is_empty() && d.lags.len() < 2 * stylized_core::diffusion::MIN_POINTS_PER_REGIME {
            return fail(format!(
                "diffusion.lags needs at least {} entries for the two-regime fit",
                2 * stylized_core::diffusion::MIN_POINTS_PER_REGIME
            ));
        }
        if !(d.regime_tolerance.is_finite() && d.regime_tolerance >= 0.0) {
            return fail("diffusion.regime_tolerance must be non-negative".into());
        }
        if !(d.tail_fraction > 0.0 && d.tail_fraction <= 0.5) {
            return fail("diffusion.tail_fraction must lie in (0, 0.5]".into());
        }

        let a = &self.acf;
        if a.max_lag < 1 || 2 * a.max_lag >= a.segment_length {
            return fail("acf requires 1 <= max_lag and 2 * max_lag < segment_length".into());
        }
        let (lo, hi) = a.fit_range;
        if lo < 1 || lo >= hi || hi > a.max_lag {
            return fail(format!("acf.fit_range must satisfy 1 <= lo < hi <= max_lag ({})", a.max_lag));
        }

        let t = &self.detrend;
        if t.window == 0 {
            return fail("detrend.window must be positive".into());
        }
        if t.sweep.contains(&0) {
            return fail("detrend.sweep windows must be positive".into());
        }
        if t.sweep_lags.is_empty() || t.sweep_lags.contains(&0) {
            return fail("detrend.sweep_lags must be non-empty and positive".into());
        }
        if !(t.r2_threshold > 0.0 && t.r2_threshold <= 1.0) {
            return fail("detrend.r2_threshold must lie in (0, 1]".into());
        }
        if t.collapse_lags.len() < 2 || t.collapse_lags[0] == 0 || !strictly_increasing(&t.collapse_lags) {
            return fail("detrend.collapse_lags needs at least two positive increasing lags".into());
        }
        if let Some(h) = t.collapse_hurst {
            if !(h > 0.0 && h < 1.0) {
                return fail("detrend.collapse_hurst must lie in (0, 1)".into());
            }
        }

        let m = &self.mfdfa;
        if !m.scales.is_empty() && (m.scales.len() < 6 || m.scales[0] < 4 || !strictly_increasing(&m.scales)) {
            return fail("mfdfa.scales needs at least six increasing scales >= 4".into());
        }
        if !m.orders.is_empty() {
            let n = m.orders.len();
            let symmetric = (0..n).all(|i| m.orders[i] == -m.orders[n - 1 - i]);
            let increasing = m.orders.windows(2).all(|w| w[0] < w[1]);
            if n < 5 || !symmetric || !increasing || !m.orders.contains(&0.0) || !m.orders.contains(&2.0) {
                return fail("mfdfa.orders must be increasing, symmetric about 0 and contain 0 and 2".into());
            }
        }
        if let Some((lo, hi)) = m.fit_range {
            if lo < 4 || lo >= hi {
                return fail("mfdfa.fit_range must satisfy 4 <= lo < hi".into());
            }
        }
        if m.betas.is_empty()
            || m.betas.iter().any(|b| !(b.is_finite() && *b > 0.0))
            || !m.betas.windows(2).all(|b| b[0] > b[1])
        {
            return fail("mfdfa.betas must be positive and strictly decreasing".into());
        }
        if !(m.slope_threshold.is_finite() && m.slope_threshold >= 0.0) {
            return fail("mfdfa.slope_threshold must be non-negative".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
input = "prices.csv"
output_dir = "out"
"#;

    #[test]
    fn defaults_fill_in() {
        let c = RunConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.dt_minutes, 10);
        assert_eq!(c.detrend.window, 1008);
        assert_eq!(c.mfdfa.input, MfdfaInput::Trended);
        c.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::from_toml("input = \"a\"\noutput_dir = \"b\"\ndt_minuts = 5\n").unwrap_err();
        assert!(matches!(err, CliError::Config(_)));
    }

    #[test]
    fn bad_acf_range_is_rejected() {
        let mut c = RunConfig::from_toml(MINIMAL).unwrap();
        c.acf.fit_range = (5, 50);
        assert!(c.validate().is_err());
    }
}
