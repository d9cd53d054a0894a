use std::fs;
use std::path::Path;
use std::process::Command;

use stylized_cli::config::{MfdfaInput, RunConfig};
use stylized_cli::pipeline;
use stylized_cli::report::StylizedFactsReport;
use stylized_cli::synth_cmd::SynthRequest;
use stylized_cli::CliError;
use stylized_core::density::{q_from_tail, Bandwidth};
use stylized_core::diffusion::DiffusionRegime;
use stylized_core::mfdfa::Fractality;
use stylized_core::synth::{self, Seed};

fn write_walk(path: &Path, n: usize, seed: u64) {
    let params: Vec<String> = [format!("n={n}"), format!("seed={seed}"), "format=prices".into()].into();
    let req = SynthRequest::parse("white", &params).unwrap();
    let f = fs::File::create(path).unwrap();
    req.write_csv(&req.generate().unwrap(), f).unwrap();
}

fn config_for(dir: &Path) -> RunConfig {
    let mut c = RunConfig::from_toml("input = \"x\"\noutput_dir = \"y\"\n").unwrap();
    c.input = dir.join("walk.csv");
    c.output_dir = dir.join("out");
    c
}

#[test]
fn random_walk_full_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    write_walk(&dir.path().join("walk.csv"), 1 << 16, 1);
    let config = config_for(dir.path());
    let report = pipeline::run(&config).unwrap();
    assert_eq!(report.failure_count(), 0, "{:?}", report.periods[0].diagnostics);
    let p = &report.periods[0];

    let d = p.diffusion.as_ref().unwrap();
    assert!((d.short.h - 0.5).abs() < 0.03, "H short {}", d.short.h);
    assert!((d.long.h - 0.5).abs() < 0.1, "H long {}", d.long.h);
    assert!((d.h_msd - 0.5).abs() < 0.03, "H msd {}", d.h_msd);
    for r in [d.short, d.long] {
        assert!((r.alpha * r.h - 1.0).abs() <= 1e-12);
    }
    assert_eq!(d.short.regime, DiffusionRegime::Normal);

    let q = p.distribution.as_ref().unwrap();
    assert!(q.semilog_q < 1.05, "semilog q {}", q.semilog_q);
    assert_eq!(q_from_tail(q.tail_slope).unwrap(), q.tail_q);

    let collapse = p.detrend.as_ref().unwrap().collapse.as_ref().unwrap();
    assert!(collapse.master_q < 1.05, "collapse q {}", collapse.master_q);

    let m = p.mfdfa.as_ref().unwrap();
    assert_eq!(m.input, MfdfaInput::Trended);
    assert!((m.h2 - 0.5).abs() < 0.03);
    assert_eq!(m.verdict, Fractality::Monofractal);
    assert_eq!(m.sweep_verdict, Some(Fractality::Monofractal));

    let out = dir.path().join("out");
    let json = fs::read_to_string(out.join("report.json")).unwrap();
    let back: StylizedFactsReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back.schema_version, 1);
    for fig in [
        "fig01_series.csv",
        "fig02_peak_scaling.csv",
        "fig03_tail.csv",
        "fig04_semilog.csv",
        "fig05_acf_sample.csv",
        "fig05_acf_chopping.csv",
        "fig06_detrend.csv",
        "fig07_collapse.csv",
        "fig08_hurst.csv",
        "fig09_fluctuation.csv",
        "fig10_spectrum_beta_0.001.csv",
    ] {
        assert!(out.join("all").join(fig).is_file(), "{fig}");
    }
    assert!(out.join("report.txt").is_file());

    // identical inputs give identical bytes
    pipeline::run(&config).unwrap();
    assert_eq!(fs::read_to_string(out.join("report.json")).unwrap(), json);
}

#[test]
fn detrended_mfdfa_input_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    write_walk(&dir.path().join("walk.csv"), 1 << 14, 2);
    let mut config = config_for(dir.path());
    config.mfdfa.input = MfdfaInput::Detrended;
    config.detrend.window = 144;
    let report = pipeline::run(&config).unwrap();
    assert_eq!(report.periods[0].mfdfa.as_ref().unwrap().input, MfdfaInput::Detrended);
    assert!(report.notes.iter().any(|n| n.contains("detrended returns")));
}

#[test]
fn overlapping_periods_fail_validation_before_reading_data() {
    let mut config = RunConfig::from_toml(
        r#"
input = "/nonexistent/prices.csv"
output_dir = "/nonexistent/out"

[[periods]]
name = "a"
start_date = "2021-01-01"
end_date = "2021-06-30"

[[periods]]
name = "b"
start_date = "2021-06-01"
end_date = "2021-12-31"
"#,
    )
    .unwrap();
    assert!(matches!(config.validate(), Err(CliError::Config(_))));
    // a data error would mean the missing input was touched first
    assert!(matches!(pipeline::run(&config), Err(CliError::Config(_))));
    config.periods[1].start_date = "2021-07-01".parse().unwrap();
    config.validate().unwrap();
}

#[test]
fn config_round_trips_through_toml() {
    let text = r#"
input = "data/btc.csv"
output_dir = "results"
default_pair = "BTC/USD"
dt_minutes = 10
max_gap = 3
jump_filter = 5000.0

[column_map]
timestamp = "time"
price = "close"
pair = "symbol"

[[periods]]
name = "Period 1"
start_date = "2019-04-02"
end_date = "2020-12-31"

[[periods]]
name = "Period 2"
start_date = "2021-01-01"
end_date = "2022-05-09"

[kde]
bandwidth = { rule = "normalized", value = 0.001 }
grid_size = 4096

[diffusion]
lags = [1, 2, 3, 4, 6, 8, 11, 16, 22, 30]
regime_tolerance = 0.025
tail_fraction = 0.3

[acf]
max_lag = 20
segment_length = 1000
fit_range = [1, 9]

[detrend]
window = 1008
sweep = [6, 144, 1008]
sweep_lags = [100, 200]
r2_threshold = 0.95
collapse_lags = [1, 3, 10]
collapse_hurst = 0.478

[mfdfa]
input = "detrended"
scales = [16, 32, 64, 128, 256, 512]
orders = [-2.0, -1.0, 0.0, 1.0, 2.0]
fit_range = [16, 512]
betas = [1.0, 0.1, 0.01, 0.001]
slope_threshold = 0.01
"#;
    let config = RunConfig::from_toml(text).unwrap();
    config.validate().unwrap();
    assert_eq!(config.kde.bandwidth, Bandwidth::Normalized(0.001));
    let again = RunConfig::from_toml(&config.to_toml().unwrap()).unwrap();
    assert_eq!(again, config);

    // defaults survive too, including values without a short decimal form
    let mut d = RunConfig::from_toml("input = \"a\"\noutput_dir = \"b\"\n").unwrap();
    d.kde.bandwidth = Bandwidth::Raw(0.1 + 0.2);
    d.diffusion.regime_tolerance = 1.0 / 3.0;
    assert_eq!(RunConfig::from_toml(&d.to_toml().unwrap()).unwrap(), d);
}

/// Unit Gaussian noise plus a sinusoid of period 1000 and amplitude 20.
fn noisy_sinusoid() -> Vec<f64> {
    synth::gaussian_white(200_000, 1.0_f64, Seed(5))
        .unwrap()
        .values
        .iter()
        .enumerate()
        .map(|(t, w)| w + 20.0 * (2.0 * std::f64::consts::PI * t as f64 / 1000.0).sin())
        .collect()
}

#[test]
fn sweep_separates_short_windows_from_the_trend_period() {
    let levels = noisy_sinusoid();
    let config = RunConfig::from_toml("input = \"a\"\noutput_dir = \"b\"\n").unwrap();
    let rows = pipeline::sweep_detrend_levels(&levels, &[10, 100, 1000], &[250, 500], &config.kde, 0.95).unwrap();
    assert!(rows[0].passes && rows[1].passes, "{rows:?}");
    // a one-period window averages the cycle away, leaving it in the residual
    assert!(!rows[2].passes, "{rows:?}");
    assert!(rows[2].min_r_squared < 0.5);
    assert_ne!(pipeline::best_windows(&rows)[0].window, 1000);
}

#[test]
fn sweep_over_whole_series_window_is_poor_at_short_lags() {
    let levels = noisy_sinusoid();
    let levels = &levels[..20_000];
    let config = RunConfig::from_toml("input = \"a\"\noutput_dir = \"b\"\n").unwrap();
    let rows = pipeline::sweep_detrend_levels(levels, &[levels.len()], &[250], &config.kde, 0.95).unwrap();
    assert!(!rows[0].passes, "{rows:?}");
}

#[test]
fn sweep_command_writes_a_table() {
    let dir = tempfile::tempdir().unwrap();
    write_walk(&dir.path().join("walk.csv"), 1 << 14, 3);
    let mut config = config_for(dir.path());
    config.detrend.sweep = vec![6, 144, 1008];
    config.detrend.sweep_lags = vec![50, 100];
    let (rows, path) = pipeline::sweep_detrend_window(&config).unwrap();
    assert_eq!(rows.len(), 3);
    let text = fs::read_to_string(path).unwrap();
    assert_eq!(text.lines().count(), 1 + 3 * 2);
}

fn stylized() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stylized"))
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");

    fs::write(&cfg, "input = \"missing.csv\"\noutput_dir = \"out\"\nmax_gap = \"x\"\n").unwrap();
    assert_eq!(stylized().args(["validate"]).arg(&cfg).status().unwrap().code(), Some(1));
    assert_eq!(stylized().args(["synth", "pink"]).status().unwrap().code(), Some(1));
    assert_eq!(stylized().arg("frobnicate").status().unwrap().code(), Some(1));

    fs::write(&cfg, "input = \"/nonexistent/missing.csv\"\noutput_dir = \"out\"\n").unwrap();
    assert_eq!(stylized().args(["validate"]).arg(&cfg).status().unwrap().code(), Some(0));
    assert_eq!(stylized().args(["run"]).arg(&cfg).status().unwrap().code(), Some(2));

    // too short for most analyses: the run finishes but reports failures
    let csv = dir.path().join("short.csv");
    write_walk(&csv, 300, 4);
    let out = dir.path().join("out");
    let status = stylized()
        .args(["run"])
        .arg(&cfg)
        .env("STYLIZED_INPUT", &csv)
        .env("STYLIZED_OUTPUT_DIR", &out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));
    let report: StylizedFactsReport =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let p = &report.periods[0];
    assert!(p.volatility.is_some());
    assert!(p.diagnostics.iter().any(|d| d.analysis == "acf"));
}

#[test]
fn synth_writes_ingestible_prices() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("fgn.csv");
    let status = stylized()
        .args(["synth", "fgn", "n=4096", "hurst=0.7", "seed=9", "format=prices"])
        .arg(format!("output={}", csv.display()))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let mut config = config_for(dir.path());
    config.input = csv;
    let (series, _) = pipeline::load_series(&config).unwrap();
    assert_eq!(series.len(), 4097);
    assert_eq!(series.filled_count(), 0);
}
