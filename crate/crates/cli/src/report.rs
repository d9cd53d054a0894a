//! Summary report: JSON for machines, a fixed-width table for people.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use stylized_core::diffusion::DiffusionRegime;
use stylized_core::mfdfa::Fractality;

use crate::config::MfdfaInput;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StylizedFactsReport {
    pub schema_version: u32,
    pub input: String,
    pub dt_minutes: u32,
    pub samples: usize,
    pub periods: Vec<PeriodReport>,
    /// Run-wide notes on methodology and data quality.
    pub notes: Vec<String>,
}

impl StylizedFactsReport {
    pub fn failure_count(&self) -> usize {
        self.periods.iter().map(|p| p.diagnostics.len()).sum()
    }
}

/// An analysis that aborted; the other sections of the period still ran.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub analysis: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodReport {
    pub name: String,
    pub start: String,
    pub end: String,
    pub samples: usize,
    pub filled_fraction: f64,
    pub volatility: Option<VolatilitySummary>,
    pub diffusion: Option<DiffusionSummary>,
    pub distribution: Option<DistributionSummary>,
    pub acf: Option<AcfSummary>,
    pub detrend: Option<DetrendSummary>,
    pub mfdfa: Option<MfdfaSummary>,
    pub notes: Vec<String>,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolatilitySummary {
    pub window: usize,
    pub mean: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeSummary {
    pub h: f64,
    pub stderr: f64,
    /// Exactly `1 / h`.
    pub alpha: f64,
    pub regime: DiffusionRegime,
    pub first_lag: usize,
    pub last_lag: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionSummary {
    pub lags: usize,
    /// One power law through every lag.
    pub h_single: f64,
    pub h_single_stderr: f64,
    /// From the second moment, `<x^2> ~ t^(2H)`.
    pub h_msd: f64,
    pub h_msd_stderr: f64,
    pub short: RegimeSummary,
    pub long: RegimeSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSummary {
    pub lag: usize,
    pub bandwidth: f64,
    pub tail_slope: f64,
    pub tail_slope_stderr: f64,
    pub tail_fit_range: (f64, f64),
    /// `1 - 2 / tail_slope`.
    pub tail_q: f64,
    pub semilog_q: f64,
    pub semilog_scale: f64,
    pub semilog_r_squared: f64,
    pub semilog_q_at_bound: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcfSummary {
    pub max_lag: usize,
    pub segment_length: usize,
    pub fit_range: (usize, usize),
    pub slope: f64,
    pub slope_stderr: f64,
    /// `1 + slope / 2`; absent when the slope is outside (-2, 0).
    pub hurst: Option<f64>,
    pub c1_sample: f64,
    pub c1_chopping: f64,
    /// In minutes; absent when C(s) has not decayed by `max_lag`.
    pub memory_time_minutes: Option<f64>,
    pub segments_used: usize,
    pub segments_dropped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseSummary {
    pub lags: Vec<usize>,
    pub hurst: f64,
    pub master_q: f64,
    pub collapse_distance: f64,
    /// Slope of ln(scale) on ln(t); comparable with `hurst`.
    pub scale_exponent: f64,
    pub diffusion_constant: f64,
    /// `hurst * (3 - master_q)`.
    pub implied_xi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetrendSummary {
    pub window: usize,
    pub window_minutes: u64,
    pub collapse: Option<CollapseSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaSummary {
    pub beta: f64,
    pub peaks: usize,
    pub support_width: f64,
    pub f_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfdfaSummary {
    pub input: MfdfaInput,
    pub scale_range: (usize, usize),
    pub fit_range: (usize, usize),
    pub h2: f64,
    pub h2_stderr: f64,
    /// `2 - h(2)`.
    pub fractal_dimension: f64,
    pub slope_negative: f64,
    pub slope_positive: f64,
    pub h_range: f64,
    pub verdict: Fractality,
    pub beta_sweep: Vec<BetaSummary>,
    /// Peak count at the smallest beta; absent when a spectrum failed.
    pub sweep_verdict: Option<Fractality>,
    pub skipped_segments: usize,
}

fn opt(x: Option<f64>, digits: usize) -> String {
    x.map_or_else(|| "-".into(), |v| format!("{v:.digits$}"))
}

/// Table-style summary, one column per period.
pub fn render_table(report: &StylizedFactsReport) -> String {
    let mut rows: Vec<(String, Vec<String>)> = Vec::new();
    let mut row = |label: &str, f: &dyn Fn(&PeriodReport) -> String| {
        rows.push((label.to_string(), report.periods.iter().map(f).collect()));
    };
    row("samples", &|p| p.samples.to_string());
    row("tail q", &|p| opt(p.distribution.as_ref().map(|d| d.tail_q), 3));
    row("semilog q", &|p| opt(p.distribution.as_ref().map(|d| d.semilog_q), 3));
    row("H short", &|p| opt(p.diffusion.as_ref().map(|d| d.short.h), 3));
    row("alpha short", &|p| opt(p.diffusion.as_ref().map(|d| d.short.alpha), 3));
    row("regime short", &|p| {
        p.diffusion.as_ref().map_or("-".into(), |d| format!("{:?}", d.short.regime).to_lowercase())
    });
    row("H long", &|p| opt(p.diffusion.as_ref().map(|d| d.long.h), 3));
    row("alpha long", &|p| opt(p.diffusion.as_ref().map(|d| d.long.alpha), 3));
    row("regime long", &|p| {
        p.diffusion.as_ref().map_or("-".into(), |d| format!("{:?}", d.long.regime).to_lowercase())
    });
    row("collapse q", &|p| {
        opt(p.detrend.as_ref().and_then(|d| d.collapse.as_ref()).map(|c| c.master_q), 3)
    });
    row("collapse distance", &|p| {
        opt(p.detrend.as_ref().and_then(|d| d.collapse.as_ref()).map(|c| c.collapse_distance), 4)
    });
    row("ACF slope", &|p| opt(p.acf.as_ref().map(|a| a.slope), 3));
    row("ACF H", &|p| opt(p.acf.as_ref().and_then(|a| a.hurst), 3));
    row("memory time [min]", &|p| opt(p.acf.as_ref().and_then(|a| a.memory_time_minutes), 1));
    row("detrend window", &|p| p.detrend.as_ref().map_or("-".into(), |d| d.window.to_string()));
    row("DFA h(2)", &|p| opt(p.mfdfa.as_ref().map(|m| m.h2), 3));
    row("h(w) slope w<0", &|p| opt(p.mfdfa.as_ref().map(|m| m.slope_negative), 4));
    row("h(w) slope w>0", &|p| opt(p.mfdfa.as_ref().map(|m| m.slope_positive), 4));
    row("fractality", &|p| {
        p.mfdfa.as_ref().map_or("-".into(), |m| format!("{:?}", m.verdict).to_lowercase())
    });
    row("failed analyses", &|p| p.diagnostics.len().to_string());

    let label_width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
    let widths: Vec<usize> = report
        .periods
        .iter()
        .enumerate()
        .map(|(j, p)| rows.iter().map(|r| r.1[j].len()).chain([p.name.len()]).max().unwrap_or(0))
        .collect();

    let mut out = String::new();
    let _ = write!(out, "{:label_width$}", "");
    for (p, w) in report.periods.iter().zip(&widths) {
        let _ = write!(out, "  {:>w$}", p.name);
    }
    out.push('\n');
    for (label, cells) in &rows {
        let _ = write!(out, "{label:label_width$}");
        for (c, w) in cells.iter().zip(&widths) {
            let _ = write!(out, "  {c:>w$}");
        }
        out.push('\n');
    }
    for p in &report.periods {
        for d in &p.diagnostics {
            let _ = writeln!(out, "[{}] {} failed: {}", p.name, d.analysis, d.message);
        }
        for n in &p.notes {
            let _ = writeln!(out, "[{}] note: {n}", p.name);
        }
    }
    for n in &report.notes {
        let _ = writeln!(out, "note: {n}");
    }
    out
}
