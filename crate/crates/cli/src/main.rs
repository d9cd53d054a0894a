use std::fs::File;
use std::io::{self, BufWriter};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use stylized_cli::config::RunConfig;
use stylized_cli::pipeline;
use stylized_cli::report::render_table;
use stylized_cli::synth_cmd::SynthRequest;
use stylized_cli::CliError;

/// Stylized-facts analysis of high-frequency price series.
#[derive(Parser)]
#[command(name = "stylized", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every analysis and write the report and plot data.
    Run { config: PathBuf },
    /// Score candidate detrending windows by how Gaussian the large-lag PDFs get.
    SweepDetrend { config: PathBuf },
    /// Write a seeded synthetic series as CSV (key=value parameters).
    Synth {
        /// white, fgn, ar1 or qgauss
        generator: String,
        /// n, seed, sigma, hurst, phi, q, format=values|prices, start_price,
        /// dt_minutes, start, output
        params: Vec<String>,
    },
    /// Check a config file without touching the data.
    Validate { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            // usage mistakes are config errors; --help and --version are not
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<CliError>().map_or(2, CliError::exit_code);
            ExitCode::from(code)
        }
    }
}

fn execute(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Run { config } => {
            let config = RunConfig::load(&config)?;
            let report = pipeline::run(&config)?;
            print!("{}", render_table(&report));
            println!("report written to {}", config.output_dir.join("report.json").display());
            let failed = report.failure_count();
            if failed > 0 {
                return Err(CliError::Analysis(format!("{failed} analysis section(s) failed")).into());
            }
        }
        Command::SweepDetrend { config } => {
            let config = RunConfig::load(&config)?;
            let (rows, path) = pipeline::sweep_detrend_window(&config)?;
            println!("{:<12} {:>8} {:>10}  pass", "period", "window", "min R^2");
            for r in &rows {
                println!("{:<12} {:>8} {:>10.4}  {}", r.period, r.window, r.min_r_squared, r.passes);
            }
            for b in pipeline::best_windows(&rows) {
                println!("best window for '{}': {}", b.period, b.window);
            }
            println!("table written to {}", path.display());
        }
        Command::Synth { generator, params } => {
            let req = SynthRequest::parse(&generator, &params)?;
            let values = req.generate()?;
            match &req.output {
                Some(path) => {
                    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
                    req.write_csv(&values, BufWriter::new(f))?;
                }
                None => req.write_csv(&values, io::stdout().lock())?,
            }
        }
        Command::Validate { config } => {
            let config = RunConfig::load(&config)?;
            println!(
                "config ok: input {}, {} period(s), output {}",
                config.input.display(),
                config.periods.len(),
                config.output_dir.display()
            );
        }
    }
    Ok(())
}
