//! Timestamped price ingestion: CSV parsing, uniform-grid resampling and
//! period segmentation.
//!
//! Gaps in the raw feed are filled by carrying the last observation forward,
//! up to a hard limit of `max_gap` consecutive grid steps. Every filled sample
//! is flagged in [`PriceSeries::gap_mask`].

use std::collections::BTreeMap;
use std::io::Read;

use chrono::{DateTime, Duration, NaiveDate, NaiveDateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Header names of the columns to read.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub timestamp: String,
    pub price: String,
    /// Optional currency-pair column; rows get `default_pair` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair: Option<String>,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            timestamp: "timestamp".into(),
            price: "price".into(),
            pair: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tick<T> {
    pub time: DateTime<Utc>,
    pub price: T,
    pub pair: String,
}

/// Parsed rows in input order.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTickTable<T> {
    pub rows: Vec<Tick<T>>,
}

impl<T: Scalar> RawTickTable<T> {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Index of the first row whose timestamp does not strictly exceed its predecessor.
    pub fn first_unsorted(&self) -> Option<usize> {
        self.rows
            .windows(2)
            .position(|w| w[1].time <= w[0].time)
            .map(|i| i + 1)
    }

    pub fn is_sorted(&self) -> bool {
        self.first_unsorted().is_none()
    }

    /// Drops ticks whose absolute move from the last accepted price exceeds
    /// `threshold`. Returns the number of rejected rows.
    pub fn filter_jumps(&mut self, threshold: T) -> usize {
        let before = self.rows.len();
        let mut last: Option<T> = None;
        self.rows.retain(|tick| match last {
            Some(prev) if (tick.price - prev).abs() > threshold => false,
            _ => {
                last = Some(tick.price);
                true
            }
        });
        before - self.rows.len()
    }
}

/// Uniformly gridded price index `I(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries<T> {
    pub start: DateTime<Utc>,
    pub dt_minutes: u32,
    pub values: Vec<T>,
    /// `true` where the value was carried forward over a missing grid point.
    pub gap_mask: Vec<bool>,
}

impl<T: Scalar> PriceSeries<T> {
    /// Builds a gap-free series, validating length and positivity.
    pub fn new(start: DateTime<Utc>, dt_minutes: u32, values: Vec<T>) -> Result<Self> {
        let gap_mask = vec![false; values.len()];
        Self::with_gaps(start, dt_minutes, values, gap_mask)
    }

    pub fn with_gaps(
        start: DateTime<Utc>,
        dt_minutes: u32,
        values: Vec<T>,
        gap_mask: Vec<bool>,
    ) -> Result<Self> {
        if dt_minutes == 0 {
            return Err(Error::InvalidArgument("dt_minutes must be positive".into()));
        }
        if values.len() < 2 {
            return Err(Error::TooShort {
                needed: 2,
                got: values.len(),
            });
        }
        if gap_mask.len() != values.len() {
            return Err(Error::InvalidArgument("gap_mask length mismatch".into()));
        }
        if let Some(i) = values.iter().position(|v| !(v.is_finite() && *v > T::zero())) {
            return Err(Error::InvalidArgument(format!(
                "price at index {i} is not a positive finite number"
            )));
        }
        Ok(Self {
            start,
            dt_minutes,
            values,
            gap_mask,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn step(&self) -> Duration {
        Duration::minutes(i64::from(self.dt_minutes))
    }

    /// Timestamp of grid index `i`.
    pub fn time_at(&self, i: usize) -> DateTime<Utc> {
        self.start + self.step() * i as i32
    }

    pub fn end(&self) -> DateTime<Utc> {
        self.time_at(self.len() - 1)
    }

    pub fn filled_count(&self) -> usize {
        self.gap_mask.iter().filter(|&&g| g).count()
    }

    /// Fraction of samples produced by carry-forward.
    pub fn filled_fraction(&self) -> f64 {
        self.filled_count() as f64 / self.len() as f64
    }
}

/// A named analysis window with inclusive calendar-date bounds (UTC).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodSpec {
    pub name: String,
    pub start_date: NaiveDate,
    pub end_date: NaiveDate,
}

impl PeriodSpec {
    pub fn new(name: impl Into<String>, start_date: NaiveDate, end_date: NaiveDate) -> Result<Self> {
        let spec = Self {
            name: name.into(),
            start_date,
            end_date,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.start_date >= self.end_date {
            return Err(Error::Period {
                name: self.name.clone(),
                message: format!(
                    "start {} must precede end {}",
                    self.start_date, self.end_date
                ),
            });
        }
        Ok(())
    }

    /// Half-open instant range `[start 00:00, end + 1 day 00:00)`.
    pub fn instant_range(&self) -> (DateTime<Utc>, DateTime<Utc>) {
        let midnight = |d: NaiveDate| Utc.from_utc_datetime(&d.and_hms_opt(0, 0, 0).expect("midnight"));
        (
            midnight(self.start_date),
            midnight(self.end_date) + Duration::days(1),
        )
    }

    fn overlaps(&self, other: &PeriodSpec) -> bool {
        self.start_date <= other.end_date && other.start_date <= self.end_date
    }

    /// The two analysis windows used for the 2019–2022 BTC/USD study.
    pub fn btc_usd_defaults() -> Vec<PeriodSpec> {
        let d = |y, m, day| NaiveDate::from_ymd_opt(y, m, day).expect("valid date");
        vec![
            PeriodSpec {
                name: "Period 1".into(),
                start_date: d(2019, 4, 2),
                end_date: d(2020, 12, 31),
            },
            PeriodSpec {
                name: "Period 2".into(),
                start_date: d(2021, 1, 1),
                end_date: d(2022, 5, 9),
            },
        ]
    }
}

/// Parses a timestamp in RFC 3339 (seconds optional) or `YYYY-MM-DD HH:MM[:SS]`.
/// Values without an offset are taken as UTC.
pub fn parse_timestamp(text: &str) -> Option<DateTime<Utc>> {
    let s = text.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.with_timezone(&Utc));
    }
    // RFC 3339 without seconds: 2021-01-01T00:10Z, 2021-01-01T00:10+02:00
    let zulu = s.strip_suffix('Z').or_else(|| s.strip_suffix('z'));
    if let Some(body) = zulu {
        for fmt in ["%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M", "%Y-%m-%dT%H:%M:%S%.f"] {
            if let Ok(t) = NaiveDateTime::parse_from_str(body, fmt) {
                return Some(Utc.from_utc_datetime(&t));
            }
        }
    }
    for fmt in ["%Y-%m-%dT%H:%M%:z", "%Y-%m-%d %H:%M%:z", "%Y-%m-%d %H:%M:%S%:z"] {
        if let Ok(t) = DateTime::parse_from_str(s, fmt) {
            return Some(t.with_timezone(&Utc));
        }
    }
    for fmt in [
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y-%m-%d %H:%M",
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%dT%H:%M",
    ] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(Utc.from_utc_datetime(&t));
        }
    }
    None
}

/// Reads a headed CSV stream into a [`RawTickTable`].
///
/// Line numbers in errors are 1-based and count the header as line 1.
pub fn parse_price_csv<T: Scalar, R: Read>(
    stream: R,
    columns: &ColumnMap,
    default_pair: &str,
) -> Result<RawTickTable<T>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(stream);
    let headers = reader.headers().map_err(|e| Error::Csv(e.to_string()))?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Csv(format!("missing column '{name}'")))
    };
    let ts_col = find(&columns.timestamp)?;
    let price_col = find(&columns.price)?;
    let pair_col = columns.pair.as_deref().map(find).transpose()?;

    let mut rows: Vec<Tick<T>> = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx as u64 + 2;
        let record = record.map_err(|e| Error::MalformedRow {
            line,
            message: e.to_string(),
        })?;
        let field = |col: usize, what: &str| {
            record.get(col).ok_or_else(|| Error::MalformedRow {
                line,
                message: format!("missing {what} field"),
            })
        };
        let ts_text = field(ts_col, "timestamp")?;
        let time = parse_timestamp(ts_text).ok_or_else(|| Error::MalformedRow {
            line,
            message: format!("unparseable timestamp '{ts_text}'"),
        })?;
        let price_text = field(price_col, "price")?;
        let price: f64 = price_text.parse().map_err(|_| Error::MalformedRow {
            line,
            message: format!("unparseable price '{price_text}'"),
        })?;
        if !(price.is_finite() && price > 0.0) {
            return Err(Error::MalformedRow {
                line,
                message: format!("price must be positive, got {price_text}"),
            });
        }
        let pair = match pair_col {
            Some(c) => field(c, "pair")?.to_string(),
            None => default_pair.to_string(),
        };
        if let Some(prev) = rows.last() {
            if prev.time == time {
                return Err(Error::MalformedRow {
                    line,
                    message: format!("duplicate timestamp {time}"),
                });
            }
        }
        rows.push(Tick {
            time,
            price: T::lit(price),
            pair,
        });
    }
    if rows.is_empty() {
        return Err(Error::NoData);
    }
    // Non-adjacent duplicates only show up once sorted.
    let mut times: Vec<DateTime<Utc>> = rows.iter().map(|r| r.time).collect();
    times.sort_unstable();
    if let Some(w) = times.windows(2).find(|w| w[0] == w[1]) {
        let line = rows.iter().rposition(|r| r.time == w[0]).unwrap_or(0) as u64 + 2;
        return Err(Error::MalformedRow {
            line,
            message: format!("duplicate timestamp {}", w[0]),
        });
    }
    Ok(RawTickTable { rows })
}

fn ceil_to_grid(t: DateTime<Utc>, dt_minutes: u32) -> DateTime<Utc> {
    let step = i64::from(dt_minutes) * 60;
    let secs = t.timestamp();
    let floored = secs.div_euclid(step) * step;
    let aligned = if floored == secs && t.timestamp_subsec_nanos() == 0 {
        floored
    } else {
        floored + step
    };
    Utc.timestamp_opt(aligned, 0).single().expect("in range")
}

/// Resamples sorted ticks onto an epoch-aligned grid of `dt_minutes`.
///
/// Each grid value is the last observation at or before the grid instant.
/// Grid points with no tick in `(previous instant, instant]` are flagged as
/// filled; a run longer than `max_gap` aborts.
pub fn resample_to_grid<T: Scalar>(
    table: &RawTickTable<T>,
    dt_minutes: u32,
    max_gap: usize,
) -> Result<PriceSeries<T>> {
    if dt_minutes == 0 {
        return Err(Error::InvalidArgument("dt_minutes must be positive".into()));
    }
    if table.is_empty() {
        return Err(Error::NoData);
    }
    if let Some(i) = table.first_unsorted() {
        return Err(Error::Unsorted { line: i as u64 + 2 });
    }
    let step = Duration::minutes(i64::from(dt_minutes));
    let first = ceil_to_grid(table.rows[0].time, dt_minutes);
    let last_tick = table.rows[table.len() - 1].time;
    if first > last_tick {
        return Err(Error::TooShort { needed: 2, got: 1 });
    }

    let mut values = Vec::new();
    let mut gap_mask = Vec::new();
    let mut cursor = 0usize;
    let mut run = 0usize;
    let mut instant = first;
    while instant <= last_tick {
        let before = cursor;
        while cursor < table.len() && table.rows[cursor].time <= instant {
            cursor += 1;
        }
        // a fresh tick inside (instant - step, instant] means a real observation
        let fresh = cursor > before && table.rows[cursor - 1].time > instant - step;
        let value = table.rows[cursor - 1].price;
        if fresh || values.is_empty() {
            run = 0;
        } else {
            run += 1;
            if run > max_gap {
                // extend to the end of the gap for the report
                let gap_start = instant - step * (run as i32 - 1);
                let gap_end = table
                    .rows
                    .get(cursor)
                    .map(|r| r.time)
                    .unwrap_or(last_tick);
                let missing = ((gap_end - gap_start).num_minutes() / i64::from(dt_minutes))
                    .max(run as i64) as usize;
                return Err(Error::GapTooLarge {
                    from: gap_start.to_rfc3339(),
                    to: gap_end.to_rfc3339(),
                    missing,
                    max_gap,
                });
            }
        }
        values.push(value);
        gap_mask.push(!(fresh || gap_mask.is_empty()));
        instant += step;
    }
    PriceSeries::with_gaps(first, dt_minutes, values, gap_mask)
}

/// Cuts the series into named periods. Periods may not overlap and each must
/// intersect the series in at least two grid points.
pub fn split_periods<T: Scalar>(
    series: &PriceSeries<T>,
    specs: &[PeriodSpec],
) -> Result<BTreeMap<String, PriceSeries<T>>> {
    validate_periods(specs)?;
    let mut out = BTreeMap::new();
    for spec in specs {
        let (from, to) = spec.instant_range();
        let step_secs = i64::from(series.dt_minutes) * 60;
        let offset = |t: DateTime<Utc>| (t - series.start).num_seconds();
        // first index with time >= from, first index with time >= to
        let lo = offset(from).max(0);
        let lo = ((lo + step_secs - 1) / step_secs) as usize;
        let hi = offset(to);
        let hi = if hi <= 0 {
            0
        } else {
            (((hi + step_secs - 1) / step_secs) as usize).min(series.len())
        };
        if hi <= lo || hi - lo < 2 {
            return Err(Error::Period {
                name: spec.name.clone(),
                message: format!(
                    "range {}..={} does not overlap the data span {}..{}",
                    spec.start_date,
                    spec.end_date,
                    series.start,
                    series.end()
                ),
            });
        }
        let sub = PriceSeries::with_gaps(
            series.time_at(lo),
            series.dt_minutes,
            series.values[lo..hi].to_vec(),
            series.gap_mask[lo..hi].to_vec(),
        )?;
        out.insert(spec.name.clone(), sub);
    }
    Ok(out)
}

pub fn validate_periods(specs: &[PeriodSpec]) -> Result<()> {
    for spec in specs {
        spec.validate()?;
    }
    for (i, a) in specs.iter().enumerate() {
        for b in &specs[i + 1..] {
            if a.name == b.name {
                return Err(Error::Period {
                    name: a.name.clone(),
                    message: "duplicate period name".into(),
                });
            }
            if a.overlaps(b) {
                return Err(Error::Period {
                    name: a.name.clone(),
                    message: format!("overlaps period '{}'", b.name),
                });
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cols() -> ColumnMap {
        ColumnMap {
            timestamp: "ts".into(),
            price: "price".into(),
            pair: None,
        }
    }

    fn parse(text: &str) -> Result<RawTickTable<f64>> {
        parse_price_csv(text.as_bytes(), &cols(), "BTC/USD")
    }

    #[test]
    fn three_rows_in_order() {
        let t = parse("ts,price\n2021-01-01T00:00Z,29000\n2021-01-01T00:10Z,29050\n2021-01-01T00:20Z,29025")
            .unwrap();
        let prices: Vec<f64> = t.rows.iter().map(|r| r.price).collect();
        assert_eq!(prices, vec![29000.0, 29050.0, 29025.0]);
        assert_eq!(t.rows[1].time, parse_timestamp("2021-01-01 00:10:00").unwrap());
        assert_eq!(t.rows[0].pair, "BTC/USD");
    }

    #[test]
    fn header_only_is_no_data() {
        assert_eq!(parse("ts,price\n").unwrap_err(), Error::NoData);
    }

    #[test]
    fn negative_price_names_line() {
        let err = parse("ts,price\n2021-01-01T00:00Z,1\n2021-01-01T00:10Z,-5").unwrap_err();
        match err {
            Error::MalformedRow { line, message } => {
                assert_eq!(line, 3);
                assert!(message.contains("-5"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_timestamp_and_duplicate() {
        assert!(matches!(
            parse("ts,price\nyesterday,1"),
            Err(Error::MalformedRow { line: 2, .. })
        ));
        assert!(matches!(
            parse("ts,price\n2021-01-01T00:00Z,1\n2021-01-01T00:00Z,2"),
            Err(Error::MalformedRow { line: 3, .. })
        ));
        assert!(matches!(
            parse("ts,price\n2021-01-01T00:00Z,1\n2021-01-01T00:10Z,2\n2021-01-01T00:00Z,2"),
            Err(Error::MalformedRow { .. })
        ));
    }

    #[test]
    fn offsets_are_normalized_to_utc() {
        let a = parse_timestamp("2021-01-01T02:00:00+02:00").unwrap();
        let b = parse_timestamp("2021-01-01T00:00Z").unwrap();
        let c = parse_timestamp("2021-01-01T02:00+02:00").unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
    }

    fn ticks(minutes: &[i64], prices: &[f64]) -> RawTickTable<f64> {
        let t0 = parse_timestamp("2021-01-01T00:00Z").unwrap();
        RawTickTable {
            rows: minutes
                .iter()
                .zip(prices)
                .map(|(&m, &p)| Tick {
                    time: t0 + Duration::minutes(m),
                    price: p,
                    pair: "X".into(),
                })
                .collect(),
        }
    }

    #[test]
    fn on_grid_ticks_resample_to_identity() {
        let prices = [1.0, 2.0, 3.0, 4.0];
        let s = resample_to_grid(&ticks(&[0, 10, 20, 30], &prices), 10, 2).unwrap();
        assert_eq!(s.values, prices.to_vec());
        assert!(s.gap_mask.iter().all(|g| !g));
    }

    #[test]
    fn single_gap_is_carried_forward() {
        let s = resample_to_grid(&ticks(&[0, 10, 30], &[1.0, 2.0, 3.0]), 10, 2).unwrap();
        assert_eq!(s.values, vec![1.0, 2.0, 2.0, 3.0]);
        assert_eq!(s.gap_mask, vec![false, false, true, false]);
    }

    #[test]
    fn long_gap_aborts_with_window() {
        let err = resample_to_grid(&ticks(&[0, 10, 70], &[1.0, 2.0, 3.0]), 10, 2).unwrap_err();
        match err {
            Error::GapTooLarge { from, to, missing, .. } => {
                assert!(from.starts_with("2021-01-01T00:20"));
                assert!(to.starts_with("2021-01-01T01:10"));
                assert_eq!(missing, 5);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn off_grid_ticks_use_last_observation() {
        let s = resample_to_grid(&ticks(&[3, 9, 14, 27], &[1.0, 2.0, 3.0, 4.0]), 10, 2).unwrap();
        // grid 00:10, 00:20 (00:30 is after the last tick)
        assert_eq!(s.values, vec![2.0, 3.0]);
        assert_eq!(s.start, parse_timestamp("2021-01-01T00:10Z").unwrap());
    }

    #[test]
    fn jump_filter_drops_spikes() {
        let mut t = ticks(&[0, 10, 20, 30], &[100.0, 5000.0, 101.0, 102.0]);
        assert_eq!(t.filter_jumps(50.0), 1);
        assert_eq!(t.len(), 3);
    }

    fn daily_series(days: i64) -> PriceSeries<f64> {
        let start = parse_timestamp("2019-01-01T00:00Z").unwrap();
        let n = (days * 24 * 6) as usize;
        PriceSeries::new(start, 10, (0..n).map(|i| 100.0 + i as f64).collect()).unwrap()
    }

    #[test]
    fn whole_span_period_is_identity() {
        let s = daily_series(3);
        let d = |s: &str| NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap();
        let spec = PeriodSpec::new("all", d("2019-01-01"), d("2019-01-03")).unwrap();
        let out = split_periods(&s, &[spec]).unwrap();
        assert_eq!(out["all"], s);
    }

    #[test]
    fn overlapping_and_disjoint_specs() {
        let s = daily_series(10);
        let d = |s: &str| NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap();
        let a = PeriodSpec::new("a", d("2019-01-01"), d("2019-01-04")).unwrap();
        let b = PeriodSpec::new("b", d("2019-01-04"), d("2019-01-06")).unwrap();
        assert!(matches!(
            split_periods(&s, &[a.clone(), b]),
            Err(Error::Period { .. })
        ));
        let b = PeriodSpec::new("b", d("2019-01-05"), d("2019-01-06")).unwrap();
        let out = split_periods(&s, &[a, b]).unwrap();
        assert_eq!(out["a"].len(), 4 * 144);
        assert_eq!(out["b"].start, parse_timestamp("2019-01-05T00:00Z").unwrap());
        // adjacent periods reproduce the underlying slice
        let mut joined = out["a"].values.clone();
        joined.extend_from_slice(&out["b"].values);
        assert_eq!(joined, s.values[..6 * 144].to_vec());
    }

    #[test]
    fn spec_before_data_is_rejected() {
        let s = daily_series(3);
        let d = |s: &str| NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap();
        let spec = PeriodSpec::new("early", d("2018-01-01"), d("2018-02-01")).unwrap();
        assert!(matches!(split_periods(&s, &[spec]), Err(Error::Period { .. })));
    }

    #[test]
    fn inverted_spec_rejected() {
        let d = |s: &str| NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap();
        assert!(PeriodSpec::new("x", d("2020-01-02"), d("2020-01-01")).is_err());
    }
}
