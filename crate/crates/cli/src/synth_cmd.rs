//! `synth <generator> key=value ...`: seeded reference series as CSV.

use std::io::Write;
use std::path::PathBuf;

use chrono::{DateTime, Duration, Utc};
use stylized_core::synth::{self, Seed};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Generator {
    /// iid N(0, sigma^2).
    White,
    /// Fractional Gaussian noise (`hurst`), scaled by `sigma`.
    Fgn,
    /// Stationary AR(1) (`phi`), scaled by `sigma`.
    Ar1,
    /// q-Gaussian draws (`q`), scaled by `sigma`.
    QGauss,
}

impl std::str::FromStr for Generator {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "white" => Ok(Generator::White),
            "fgn" => Ok(Generator::Fgn),
            "ar1" => Ok(Generator::Ar1),
            "qgauss" => Ok(Generator::QGauss),
            _ => Err(CliError::Config(format!(
                "unknown generator '{s}' (expected white, fgn, ar1 or qgauss)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    /// `index,value` rows of the increments.
    Values,
    /// `timestamp,price` rows of the cumulative sum, ready for `run`.
    Prices,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthRequest {
    pub generator: Generator,
    pub n: usize,
    pub seed: u64,
    pub sigma: f64,
    pub hurst: f64,
    pub phi: f64,
    pub q: f64,
    pub format: Format,
    pub start_price: f64,
    pub dt_minutes: u32,
    pub start: DateTime<Utc>,
    pub output: Option<PathBuf>,
}

impl SynthRequest {
    pub fn parse(generator: &str, params: &[String]) -> Result<Self, CliError> {
        let mut req = SynthRequest {
            generator: generator.parse()?,
            n: 1 << 16,
            seed: 0,
            sigma: 1.0,
            hurst: 0.5,
            phi: 0.5,
            q: 1.5,
            format: Format::Values,
            start_price: 10_000.0,
            dt_minutes: 10,
            start: DateTime::from_timestamp(1_609_459_200, 0).expect("2021-01-01"),
            output: None,
        };
        for p in params {
            let (key, value) = p
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("parameter '{p}' is not key=value")))?;
            let bad = |e: &dyn std::fmt::Display| CliError::Config(format!("{key}={value}: {e}"));
            match key {
                "n" => req.n = value.parse().map_err(|e| bad(&e))?,
                "seed" => req.seed = value.parse().map_err(|e| bad(&e))?,
                "sigma" => req.sigma = value.parse().map_err(|e| bad(&e))?,
                "hurst" => req.hurst = value.parse().map_err(|e| bad(&e))?,
                "phi" => req.phi = value.parse().map_err(|e| bad(&e))?,
                "q" => req.q = value.parse().map_err(|e| bad(&e))?,
                "start_price" => req.start_price = value.parse().map_err(|e| bad(&e))?,
                "dt_minutes" => req.dt_minutes = value.parse().map_err(|e| bad(&e))?,
                "start" => {
                    req.start = stylized_core::ingest::parse_timestamp(value)
                        .ok_or_else(|| bad(&"unparseable timestamp"))?
                }
                "format" => {
                    req.format = match value {
                        "values" => Format::Values,
                        "prices" => Format::Prices,
                        _ => return Err(bad(&"expected values or prices")),
                    }
                }
                "output" => req.output = Some(value.into()),
                _ => return Err(CliError::Config(format!("unknown parameter '{key}'"))),
            }
        }
        if !(req.sigma.is_finite() && req.sigma > 0.0) {
            return Err(CliError::Config("sigma must be positive".into()));
        }
        if req.dt_minutes == 0 {
            return Err(CliError::Config("dt_minutes must be positive".into()));
        }
        Ok(req)
    }

    /// The increments; invalid generator parameters are config errors.
    pub fn generate(&self) -> Result<Vec<f64>, CliError> {
        let seed = Seed(self.seed);
        let scaled = |v: Vec<f64>| v.into_iter().map(|x| x * self.sigma).collect();
        let values = match self.generator {
            Generator::White => synth::gaussian_white(self.n, self.sigma, seed).map(|r| r.values),
            Generator::Fgn => synth::fgn(self.n, self.hurst, seed).map(|r| scaled(r.values)),
            Generator::Ar1 => synth::ar1(self.n, self.phi, seed).map(|r| scaled(r.values)),
            Generator::QGauss => synth::q_gaussian_sample(self.n, self.q, seed).map(scaled),
        };
        values.map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn write_csv<W: Write>(&self, values: &[f64], mut out: W) -> std::io::Result<()> {
        match self.format {
            Format::Values => {
                writeln!(out, "index,value")?;
                for (i, v) in values.iter().enumerate() {
                    writeln!(out, "{i},{v}")?;
                }
            }
            Format::Prices => {
                let step = Duration::minutes(i64::from(self.dt_minutes));
                writeln!(out, "timestamp,price")?;
                for (i, p) in synth::cumulative(values, self.start_price).iter().enumerate() {
                    let t = self.start + step * i as i32;
                    writeln!(out, "{},{p}", t.format("%Y-%m-%dT%H:%M:%SZ"))?;
                }
            }
        }
        out.flush()
    }
}
