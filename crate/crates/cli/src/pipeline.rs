//! Ingest, per-period analyses and artifact writing.
//!
//! Each analysis in a period runs in isolation: a failure becomes a
//! [`Diagnostic`] and the remaining analyses still run.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use stylized_core::density::{self, EmpiricalPdf, SemilogOptions, TailOptions};
use stylized_core::diffusion::{self, TwoRegimeFit};
use stylized_core::ingest;
use stylized_core::series::{self, TrendDecomposition};
use stylized_core::{autocorr, mfdfa, Error as CoreError, PriceSeries64};

use crate::config::{KdeConfig, MfdfaInput, RunConfig};
use crate::report::*;
use crate::CliError;

type SectionResult<T> = Result<T, Box<dyn std::error::Error + Send + Sync>>;

/// Filled samples above this fraction of a period are flagged.
const GAP_NOTE_FRACTION: f64 = 0.001;

/// Default peak-scaling lags keep at least this many disjoint windows per
/// ensemble; beyond that the KDE peak wanders and fakes a second regime.
const MIN_DISJOINT_WINDOWS: usize = 256;

pub fn load_series(config: &RunConfig) -> Result<(PriceSeries64, Vec<String>), CliError> {
    let data = |e: CoreError| CliError::Data(e.to_string());
    let file = File::open(&config.input)
        .map_err(|e| CliError::Data(format!("{}: {e}", config.input.display())))?;
    let mut table = ingest::parse_price_csv::<f64, _>(io::BufReader::new(file), &config.column_map, &config.default_pair)
        .map_err(data)?;
    let mut notes = Vec::new();
    if let Some(threshold) = config.jump_filter {
        let dropped = table.filter_jumps(threshold);
        if dropped > 0 {
            notes.push(format!("jump filter rejected {dropped} ticks moving more than {threshold}"));
        }
    }
    let series = ingest::resample_to_grid(&table, config.dt_minutes, config.max_gap).map_err(data)?;
    Ok((series, notes))
}

/// Named periods in config order; no periods means the whole series.
pub fn split(config: &RunConfig, series: &PriceSeries64) -> Result<Vec<(String, PriceSeries64)>, CliError> {
    if config.periods.is_empty() {
        return Ok(vec![("all".into(), series.clone())]);
    }
    let mut map = ingest::split_periods(series, &config.periods).map_err(|e| CliError::Data(e.to_string()))?;
    Ok(config
        .periods
        .iter()
        .filter_map(|p| map.remove(&p.name).map(|s| (p.name.clone(), s)))
        .collect())
}

fn slug(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect()
}

fn create(dir: &Path, name: &str) -> io::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn kde_of(samples: &[f64], kde: &KdeConfig) -> SectionResult<EmpiricalPdf<f64>> {
    let h = kde.bandwidth.resolve(samples)?;
    Ok(density::kde(samples, h, kde.grid_size)?)
}

/// Runs the whole pipeline and writes `report.json`, `report.txt` and the
/// per-period CSV files under `output_dir`.
pub fn run(config: &RunConfig) -> Result<StylizedFactsReport, CliError> {
    config.validate()?;
    let (series, mut notes) = load_series(config)?;
    let periods = split(config, &series)?;
    let out = &config.output_dir;
    fs::create_dir_all(out).map_err(|e| CliError::Data(format!("{}: {e}", out.display())))?;

    let mut reports = Vec::with_capacity(periods.len());
    for (name, s) in &periods {
        let dir = out.join(slug(name));
        fs::create_dir_all(&dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
        reports.push(analyze_period(config, name, s, &dir));
    }

    notes.push("diffusion: P_max is the maximum of the KDE on its grid; the p_zero column holds P(0, t)".into());
    notes.push("acf: H = 1 + slope / 2 from |C(s)| ~ s^(2H - 2) on the sample ACF".into());
    notes.push(format!(
        "mfdfa: run on {} returns",
        match config.mfdfa.input {
            MfdfaInput::Trended => "trended",
            MfdfaInput::Detrended => "detrended",
        }
    ));
    notes.push("detrend collapse: implied xi = H (3 - q) is derived, not fitted".into());

    let report = StylizedFactsReport {
        schema_version: SCHEMA_VERSION,
        input: config.input.display().to_string(),
        dt_minutes: config.dt_minutes,
        samples: series.len(),
        periods: reports,
        notes,
    };
    let write = || -> io::Result<()> {
        let mut json = create(out, "report.json")?;
        serde_json::to_writer_pretty(&mut json, &report)?;
        json.write_all(b"\n")?;
        json.flush()?;
        fs::write(out.join("report.txt"), render_table(&report))
    };
    write().map_err(|e| CliError::Data(format!("writing report: {e}")))?;
    Ok(report)
}

/// All analyses for one period. Never fails as a whole.
pub fn analyze_period(config: &RunConfig, name: &str, series: &PriceSeries64, dir: &Path) -> PeriodReport {
    let mut report = PeriodReport {
        name: name.to_string(),
        start: series.start.to_rfc3339(),
        end: series.end().to_rfc3339(),
        samples: series.len(),
        filled_fraction: series.filled_fraction(),
        volatility: None,
        diffusion: None,
        distribution: None,
        acf: None,
        detrend: None,
        mfdfa: None,
        notes: Vec::new(),
        diagnostics: Vec::new(),
    };
    if report.filled_fraction > GAP_NOTE_FRACTION {
        report.notes.push(format!(
            "{} of {} samples ({:.3}%) carried forward over gaps",
            series.filled_count(),
            series.len(),
            100.0 * report.filled_fraction
        ));
    }

    fn record<T>(report: &mut PeriodReport, analysis: &str, r: SectionResult<T>) -> Option<T> {
        r.map_err(|e| {
            report.diagnostics.push(Diagnostic {
                analysis: analysis.into(),
                message: e.to_string(),
            })
        })
        .ok()
    }

    report.volatility = record(&mut report, "volatility", volatility(config, series, dir));

    let diffusion = record(&mut report, "diffusion", diffusion_section(config, series, dir));
    let h_short = diffusion.as_ref().map(|(_, fit)| fit.h_short);
    report.diffusion = diffusion.map(|(s, _)| s);

    report.distribution = record(&mut report, "distribution", distribution(config, series, dir));
    if report.distribution.as_ref().is_some_and(|d| d.semilog_q_at_bound) {
        report.notes.push("semilog q ended at a search bound".into());
    }

    let acf = record(&mut report, "acf", acf_section(config, series, dir));
    if let Some((summary, notes)) = acf {
        report.acf = Some(summary);
        report.notes.extend(notes);
    }

    let decomposition = record(&mut report, "detrend", detrend_section(config, series, dir));
    if let Some(d) = &decomposition {
        let collapse = record(&mut report, "collapse", collapse_section(config, d, h_short, dir));
        report.detrend = Some(DetrendSummary {
            window: d.window,
            window_minutes: d.window as u64 * u64::from(series.dt_minutes),
            collapse,
        });
    }

    let returns = match config.mfdfa.input {
        MfdfaInput::Trended => series::differences(&series.values).map_err(Into::into),
        MfdfaInput::Detrended => match &decomposition {
            Some(d) => series::differences(&d.residual).map_err(Into::into),
            None => Err("detrended input requested but detrending failed".into()),
        },
    };
    let mfdfa = record(&mut report, "mfdfa", returns.and_then(|r| mfdfa_section(config, &r, dir)));
    if let Some((summary, diagnostics)) = mfdfa {
        if summary.skipped_segments > 0 {
            report.notes.push(format!(
                "mfdfa skipped {} zero-variance segments",
                summary.skipped_segments
            ));
        }
        report.mfdfa = Some(summary);
        report.diagnostics.extend(diagnostics);
    }
    report
}

fn volatility(config: &RunConfig, series: &PriceSeries64, dir: &Path) -> SectionResult<VolatilitySummary> {
    let window = config.volatility.window;
    let returns = series::differences(&series.values)?;
    let vol = series::rolling_volatility(&returns, window)?;

    // row i: price I(i), return I(i+1) - I(i), volatility of returns[i+1-w..=i]
    let mut out = create(dir, "fig01_series.csv")?;
    writeln!(out, "index,time,price,filled,return,volatility")?;
    for i in 0..series.len() {
        let ret = returns.get(i).map_or(String::new(), |r| format!("{r:e}"));
        let v = if i + 1 >= window && i < returns.len() {
            format!("{:e}", vol[i + 1 - window])
        } else {
            String::new()
        };
        writeln!(
            out,
            "{i},{},{},{},{ret},{v}",
            series.time_at(i).to_rfc3339(),
            series.values[i],
            u8::from(series.gap_mask[i])
        )?;
    }
    out.flush()?;
    Ok(VolatilitySummary {
        window,
        mean: vol.iter().sum::<f64>() / vol.len() as f64,
        max: vol.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

fn regime(h: f64, stderr: f64, alpha: f64, tol: f64, lags: &[usize]) -> RegimeSummary {
    RegimeSummary {
        h,
        stderr,
        alpha,
        regime: diffusion::classify_regime(alpha, tol),
        first_lag: lags[0],
        last_lag: lags[lags.len() - 1],
    }
}

fn diffusion_section(
    config: &RunConfig,
    series: &PriceSeries64,
    dir: &Path,
) -> SectionResult<(DiffusionSummary, TwoRegimeFit<f64>)> {
    let lags = if config.diffusion.lags.is_empty() {
        diffusion::default_lags(series.len())
            .into_iter()
            .filter(|&l| l * MIN_DISJOINT_WINDOWS <= series.len())
            .collect()
    } else {
        config.diffusion.lags.clone()
    };
    let curve = diffusion::peak_scaling(series, &lags, &config.kde.bandwidth, config.kde.grid_size)?;
    let mut out = create(dir, "fig02_peak_scaling.csv")?;
    curve.write_csv(&mut out, series.dt_minutes)?;
    out.flush()?;

    // PDFs of the raw returns at a handful of lags
    let mut out = create(dir, "fig02_pdfs.csv")?;
    writeln!(out, "lag,x,density")?;
    for &lag in config.detrend.collapse_lags.iter().filter(|&&l| 4 * l < series.len()) {
        let ensemble = series::lagged_returns(&series.values, lag)?;
        let pdf = kde_of(&ensemble.values, &config.kde)?;
        for (x, d) in pdf.grid.iter().zip(&pdf.density) {
            writeln!(out, "{lag},{x:e},{d:e}")?;
        }
    }
    out.flush()?;

    let (h_single, h_single_stderr) = diffusion::fit_peak_hurst(&curve)?;
    let (h_msd, h_msd_stderr) = diffusion::fit_msd_hurst(&curve)?;
    let fit = diffusion::fit_two_regime(&curve)?;
    let k = curve.lags.iter().position(|&l| l == fit.breakpoint).expect("breakpoint is a lag");
    let tol = config.diffusion.regime_tolerance;
    let summary = DiffusionSummary {
        lags: curve.len(),
        h_single,
        h_single_stderr,
        h_msd,
        h_msd_stderr,
        short: regime(fit.h_short, fit.stderr_short, fit.alpha_short, tol, &curve.lags[..k]),
        long: regime(fit.h_long, fit.stderr_long, fit.alpha_long, tol, &curve.lags[k..]),
    };
    Ok((summary, fit))
}

fn distribution(config: &RunConfig, series: &PriceSeries64, dir: &Path) -> SectionResult<DistributionSummary> {
    let returns = series::differences(&series.values)?;
    let pdf = kde_of(&returns, &config.kde)?;
    let options = TailOptions {
        tail_fraction: config.diffusion.tail_fraction,
        min_density: None,
    };
    let (tail, tail_q) = density::fit_q_gaussian_tail(&pdf, &options)?;
    let semilog = density::fit_q_gaussian_semilog(&pdf, &SemilogOptions::default())?;

    let mut out = create(dir, "fig03_tail.csv")?;
    writeln!(out, "x,density,tail_fit")?;
    for (&x, &d) in pdf.grid.iter().zip(&pdf.density) {
        let fit = if x >= tail.fit_range.0 && x <= tail.fit_range.1 {
            format!("{:e}", tail.intercept.exp() * x.powf(tail.slope))
        } else {
            String::new()
        };
        writeln!(out, "{x:e},{d:e},{fit}")?;
    }
    out.flush()?;

    let mut out = create(dir, "fig04_semilog.csv")?;
    writeln!(out, "x,density,q_gaussian")?;
    for (&x, &d) in pdf.grid.iter().zip(&pdf.density) {
        let g = density::scaled_g_q(x, semilog.q, semilog.scale)?;
        writeln!(out, "{x:e},{d:e},{g:e}")?;
    }
    out.flush()?;

    Ok(DistributionSummary {
        lag: 1,
        bandwidth: pdf.bandwidth,
        tail_slope: tail.slope,
        tail_slope_stderr: tail.stderr,
        tail_fit_range: tail.fit_range,
        tail_q,
        semilog_q: semilog.q,
        semilog_scale: semilog.scale,
        semilog_r_squared: semilog.r_squared,
        semilog_q_at_bound: semilog.q_at_bound,
    })
}

fn acf_section(config: &RunConfig, series: &PriceSeries64, dir: &Path) -> SectionResult<(AcfSummary, Vec<String>)> {
    let a = &config.acf;
    let returns = series::increments(series)?;
    let sample = autocorr::sample_acf(&returns, a.max_lag)?;
    let chopped = autocorr::chopped_acf(&returns, a.segment_length, a.max_lag)?;
    let mut out = create(dir, "fig05_acf_sample.csv")?;
    sample.write_csv(&mut out)?;
    out.flush()?;
    let mut out = create(dir, "fig05_acf_chopping.csv")?;
    chopped.write_csv(&mut out)?;
    out.flush()?;

    let fit = autocorr::fit_abs_acf_slope(&sample, a.fit_range.0, a.fit_range.1)?;
    let mut notes = Vec::new();
    let hurst = match autocorr::hurst_from_acf_slope(fit.slope) {
        Ok(h) => Some(h),
        Err(e) => {
            notes.push(format!("acf: no H from slope ({e})"));
            None
        }
    };
    let memory = match autocorr::memory_time(&sample) {
        Ok(t) => Some(t * f64::from(series.dt_minutes)),
        Err(_) => {
            notes.push(format!("acf: C(s) has not decayed below 0.01 by lag {}; memory time omitted", a.max_lag));
            None
        }
    };
    if chopped.segments_dropped > 0 {
        notes.push(format!("acf: dropped {} zero-variance segments", chopped.segments_dropped));
    }
    Ok((
        AcfSummary {
            max_lag: a.max_lag,
            segment_length: a.segment_length,
            fit_range: a.fit_range,
            slope: fit.slope,
            slope_stderr: fit.slope_stderr,
            hurst,
            c1_sample: sample.values[1],
            c1_chopping: chopped.values[1],
            memory_time_minutes: memory,
            segments_used: chopped.segments_used,
            segments_dropped: chopped.segments_dropped,
        },
        notes,
    ))
}

fn detrend_section(
    config: &RunConfig,
    series: &PriceSeries64,
    dir: &Path,
) -> SectionResult<TrendDecomposition<f64>> {
    let d = series::moving_average_trend(&series.values, config.detrend.window)?;
    let mut out = create(dir, "fig06_detrend.csv")?;
    writeln!(out, "index,time,price,trend,detrended,detrended_return")?;
    for i in 0..series.len() {
        let ret = if i + 1 < series.len() {
            format!("{:e}", d.residual[i + 1] - d.residual[i])
        } else {
            String::new()
        };
        writeln!(
            out,
            "{i},{},{},{:e},{:e},{ret}",
            series.time_at(i).to_rfc3339(),
            series.values[i],
            d.trend[i],
            d.residual[i]
        )?;
    }
    out.flush()?;
    Ok(d)
}

fn collapse_section(
    config: &RunConfig,
    d: &TrendDecomposition<f64>,
    h_short: Option<f64>,
    dir: &Path,
) -> SectionResult<CollapseSummary> {
    let hurst = config
        .detrend
        .collapse_hurst
        .or(h_short)
        .ok_or("no Hurst exponent: set detrend.collapse_hurst or fix the diffusion analysis")?;
    let pdfs = config
        .detrend
        .collapse_lags
        .iter()
        .map(|&lag| {
            let ensemble = series::lagged_returns(&d.residual, lag)?;
            Ok((lag, kde_of(&ensemble.values, &config.kde)?))
        })
        .collect::<SectionResult<Vec<_>>>()?;
    let c = diffusion::collapse_pdfs(&pdfs, hurst)?;
    let mut out = create(dir, "fig07_collapse.csv")?;
    c.write_csv(&mut out)?;
    out.flush()?;
    Ok(CollapseSummary {
        lags: c.lags,
        hurst,
        master_q: c.master_q,
        collapse_distance: c.collapse_distance,
        scale_exponent: c.scale_exponent,
        diffusion_constant: c.diffusion_constant,
        implied_xi: hurst * (3.0 - c.master_q),
    })
}

fn mfdfa_section(
    config: &RunConfig,
    returns: &[f64],
    dir: &Path,
) -> SectionResult<(MfdfaSummary, Vec<Diagnostic>)> {
    let m = &config.mfdfa;
    let scales = if m.scales.is_empty() {
        mfdfa::default_scales(returns.len())
    } else {
        m.scales.clone()
    };
    let orders = if m.orders.is_empty() {
        mfdfa::default_orders::<f64>()
    } else {
        m.orders.clone()
    };
    let profile = mfdfa::profile(returns)?;
    let matrix = mfdfa::fluctuation_matrix(&profile, &scales, &orders)?;
    let fit_range = m
        .fit_range
        .unwrap_or((scales[0], scales[scales.len() - 1]));
    let hurst = mfdfa::generalized_hurst(&matrix, fit_range)?;

    let mut out = create(dir, "fig08_hurst.csv")?;
    hurst.write_csv(&mut out)?;
    out.flush()?;
    let mut out = create(dir, "fig09_fluctuation.csv")?;
    matrix.write_csv(&mut out)?;
    out.flush()?;

    let i2 = hurst
        .orders
        .iter()
        .position(|&w| w == 2.0)
        .ok_or("order 2 is missing from the order grid")?;
    let test = mfdfa::multifractality_test(&hurst, m.slope_threshold)?;

    let mut diagnostics = Vec::new();
    let mut sweep = Vec::new();
    for &beta in &m.betas {
        match mfdfa::legendre_spectrum(&hurst, beta) {
            Ok(s) => {
                let mut out = create(dir, &format!("fig10_spectrum_beta_{beta}.csv"))?;
                s.write_csv(&mut out)?;
                out.flush()?;
                sweep.push(BetaSummary {
                    beta,
                    peaks: s.peaks.len(),
                    support_width: s.support_width,
                    f_max: s.f_max(),
                });
            }
            Err(e) => diagnostics.push(Diagnostic {
                analysis: format!("legendre beta={beta}"),
                message: e.to_string(),
            }),
        }
    }
    let sweep_verdict = if diagnostics.is_empty() {
        Some(mfdfa::beta_sweep(&hurst, &m.betas)?.verdict)
    } else {
        None
    };

    let h2 = hurst.h[i2];
    Ok((
        MfdfaSummary {
            input: m.input,
            scale_range: (scales[0], scales[scales.len() - 1]),
            fit_range,
            h2,
            h2_stderr: hurst.stderr[i2],
            fractal_dimension: 2.0 - h2,
            slope_negative: test.negative.slope,
            slope_positive: test.positive.slope,
            h_range: test.h_range,
            verdict: test.verdict,
            beta_sweep: sweep,
            sweep_verdict,
            skipped_segments: matrix.skipped_segments.iter().sum(),
        },
        diagnostics,
    ))
}

/// One candidate window of the detrending sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub period: String,
    pub window: usize,
    pub lags: Vec<usize>,
    /// Gaussian-fit R² of the detrended PDF at each lag.
    pub r_squared: Vec<f64>,
    /// The score: worst R² over the lags.
    pub min_r_squared: f64,
    /// Every R² reaches the threshold.
    pub passes: bool,
}

/// Detrends `levels` with each window and scores how Gaussian the large-lag
/// PDFs of the detrended index are.
pub fn sweep_detrend_levels(
    levels: &[f64],
    windows: &[usize],
    lags: &[usize],
    kde: &KdeConfig,
    threshold: f64,
) -> stylized_core::Result<Vec<SweepRow>> {
    windows
        .iter()
        .map(|&window| {
            let d = series::moving_average_trend(levels, window)?;
            let r_squared = lags
                .iter()
                .map(|&lag| {
                    let x = series::lagged_returns(&d.residual, lag)?.values;
                    let h = kde.bandwidth.resolve(&x)?;
                    let pdf = density::kde(&x, h, kde.grid_size)?;
                    Ok(density::fit_gaussian(&pdf)?.r_squared)
                })
                .collect::<stylized_core::Result<Vec<f64>>>()?;
            let min = r_squared.iter().copied().fold(f64::INFINITY, f64::min);
            Ok(SweepRow {
                period: String::new(),
                window,
                lags: lags.to_vec(),
                r_squared,
                min_r_squared: min,
                passes: min >= threshold,
            })
        })
        .collect()
}

/// Highest worst-case R² per period.
pub fn best_windows(rows: &[SweepRow]) -> Vec<&SweepRow> {
    let mut best: Vec<&SweepRow> = Vec::new();
    for row in rows {
        match best.iter_mut().find(|b| b.period == row.period) {
            Some(b) if row.min_r_squared > b.min_r_squared => *b = row,
            Some(_) => {}
            None => best.push(row),
        }
    }
    best
}

/// Runs the sweep over every period and writes `sweep_detrend.csv`.
pub fn sweep_detrend_window(config: &RunConfig) -> Result<(Vec<SweepRow>, PathBuf), CliError> {
    config.validate()?;
    if config.detrend.sweep.is_empty() {
        return Err(CliError::Config("detrend.sweep lists no candidate windows".into()));
    }
    let (series, _) = load_series(config)?;
    let mut rows = Vec::new();
    for (name, s) in split(config, &series)? {
        if let Some(&w) = config.detrend.sweep.iter().find(|&&w| w > s.len()) {
            return Err(CliError::Config(format!(
                "sweep window {w} exceeds the {} samples of period '{name}'",
                s.len()
            )));
        }
        let period_rows = sweep_detrend_levels(
            &s.values,
            &config.detrend.sweep,
            &config.detrend.sweep_lags,
            &config.kde,
            config.detrend.r2_threshold,
        )
        .map_err(|e| CliError::Analysis(format!("period '{name}': {e}")))?;
        rows.extend(period_rows.into_iter().map(|r| SweepRow { period: name.clone(), ..r }));
    }

    let out = &config.output_dir;
    let path = out.join("sweep_detrend.csv");
    let write = || -> io::Result<()> {
        fs::create_dir_all(out)?;
        let mut f = create(out, "sweep_detrend.csv")?;
        writeln!(f, "period,window,lag,r_squared,min_r_squared,passes")?;
        for r in &rows {
            for (lag, r2) in r.lags.iter().zip(&r.r_squared) {
                writeln!(f, "{},{},{lag},{r2},{},{}", r.period, r.window, r.min_r_squared, r.passes)?;
            }
        }
        f.flush()
    };
    write().map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok((rows, path))
}
