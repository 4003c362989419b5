//! CO-OPS data API: hourly/6-minute water level (JSON) and monthly means (CSV).

use chrono::{DateTime, Datelike, Duration, NaiveDate, NaiveDateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use super::{excerpt, ClientError, Fetched, NoaaClients};
use crate::model::{DatasetFamily, Datum, Provenance, Series, TimeRange, Unit, Variable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interval {
    SixMinute,
    Hourly,
}

impl Interval {
    pub fn product(self) -> &'static str {
        match self {
            Interval::SixMinute => "water_level",
            Interval::Hourly => "hourly_height",
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            Interval::SixMinute => "6min",
            Interval::Hourly => "hourly",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationMeta {
    pub id: String,
    pub name: String,
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationSeries {
    pub station: StationMeta,
    pub series: Series,
}

#[derive(Debug, Deserialize)]
struct WireMeta {
    id: String,
    #[serde(default)]
    name: String,
    #[serde(default)]
    lat: String,
    #[serde(default)]
    lon: String,
}

#[derive(Debug, Deserialize)]
struct WirePoint {
    t: String,
    #[serde(default)]
    v: String,
    #[serde(default)]
    f: String,
    #[serde(default)]
    q: Option<String>,
}

#[derive(Debug, Deserialize)]
struct WireError {
    message: String,
}

#[derive(Debug, Deserialize)]
struct WireResponse {
    #[serde(default)]
    metadata: Option<WireMeta>,
    #[serde(default)]
    data: Option<Vec<WirePoint>>,
    #[serde(default)]
    error: Option<WireError>,
}

/// One parsed JSON response.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WaterLevelChunk {
    pub station: Option<StationMeta>,
    pub points: Vec<(DateTime<Utc>, Option<f64>)>,
    pub flagged: usize,
    pub verified: usize,
    pub preliminary: usize,
}

fn classify_error(message: &str, station: &str, url: &str) -> Result<(), ClientError> {
    let lower = message.to_ascii_lowercase();
    if lower.contains("no data was found") {
        return Ok(());
    }
    if lower.contains("station")
        && ["wrong", "not found", "invalid", "does not exist", "cannot be found"]
            .iter()
            .any(|k| lower.contains(k))
    {
        return Err(ClientError::StationUnknown(station.to_string()));
    }
    Err(ClientError::ProviderError {
        url: url.to_string(),
        status: Some(200),
        message: message.to_string(),
        excerpt: excerpt(message.as_bytes()),
        retryable: false,
    })
}

fn parse_coops_time(t: &str) -> Option<DateTime<Utc>> {
    NaiveDateTime::parse_from_str(t.trim(), "%Y-%m-%d %H:%M")
        .ok()
        .map(|n| n.and_utc())
}

/// Parses a CO-OPS JSON body. A "no data" error yields an empty chunk.
pub fn parse_water_level_json(
    bytes: &[u8],
    station: &str,
    url: &str,
    bad_flag_positions: &[usize],
) -> Result<WaterLevelChunk, ClientError> {
    if bytes.iter().all(|b| b.is_ascii_whitespace()) {
        return Ok(WaterLevelChunk::default());
    }
    let wire: WireResponse = serde_json::from_slice(bytes).map_err(|e| ClientError::ProviderError {
        url: url.to_string(),
        status: Some(200),
        message: format!("unparseable CO-OPS JSON: {e}"),
        excerpt: excerpt(bytes),
        retryable: false,
    })?;
    if let Some(err) = wire.error {
        classify_error(&err.message, station, url)?;
        return Ok(WaterLevelChunk::default());
    }
    let mut chunk = WaterLevelChunk {
        station: wire.metadata.map(|m| StationMeta {
            lat: m.lat.trim().parse().unwrap_or(f64::NAN),
            lon: m.lon.trim().parse().unwrap_or(f64::NAN),
            id: m.id,
            name: m.name,
        }),
        ..Default::default()
    };
    for p in wire.data.unwrap_or_default() {
        let t = parse_coops_time(&p.t).ok_or_else(|| ClientError::FormatError(format!("bad CO-OPS timestamp '{}'", p.t)))?;
        let flags: Vec<&str> = p.f.split(',').map(str::trim).collect();
        let flagged = bad_flag_positions.iter().any(|&i| flags.get(i) == Some(&"1"));
        let value = p.v.trim().parse::<f64>().ok().filter(|v| v.is_finite());
        if flagged && value.is_some() {
            chunk.flagged += 1;
        }
        match p.q.as_deref() {
            Some("v") => chunk.verified += 1,
            Some("p") => chunk.preliminary += 1,
            _ => {}
        }
        chunk.points.push((t, if flagged { None } else { value }));
    }
    Ok(chunk)
}

/// One parsed row of a monthly-mean CSV: (year, month, MSL column value).
pub type MonthlyRow = (i32, u32, Option<f64>);

pub fn parse_monthly_csv(bytes: &[u8], station: &str, url: &str) -> Result<Vec<MonthlyRow>, ClientError> {
    let text = String::from_utf8_lossy(bytes);
    let trimmed = text.trim_start();
    if trimmed.is_empty() {
        return Ok(Vec::new());
    }
    if trimmed.starts_with('{') {
        // The API answers errors in JSON even when CSV was requested.
        let wire: WireResponse = serde_json::from_str(trimmed).map_err(|e| ClientError::FormatError(e.to_string()))?;
        if let Some(err) = wire.error {
            classify_error(&err.message, station, url)?;
        }
        return Ok(Vec::new());
    }
    if !trimmed.to_ascii_lowercase().starts_with("year") {
        let first = trimmed.lines().next().unwrap_or("");
        classify_error(first.trim_start_matches("Error:").trim(), station, url)?;
        return Ok(Vec::new());
    }
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(trimmed.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| ClientError::FormatError(e.to_string()))?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| ClientError::FormatError(format!("monthly CSV lacks a `{name}` column")))
    };
    let (iy, im, imsl) = (col("Year")?, col("Month")?, col("MSL")?);
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| ClientError::FormatError(e.to_string()))?;
        let year: i32 = record
            .get(iy)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| ClientError::FormatError(format!("bad year in row {record:?}")))?;
        let month: u32 = record
            .get(im)
            .and_then(|s| s.parse().ok())
            .filter(|m| (1..=12).contains(m))
            .ok_or_else(|| ClientError::FormatError(format!("bad month in row {record:?}")))?;
        let msl = record.get(imsl).and_then(|s| s.parse::<f64>().ok()).filter(|v| v.is_finite());
        rows.push((year, month, msl));
    }
    Ok(rows)
}

/// Splits `[start, end]` into consecutive windows of at most `max_days`.
pub fn split_range(start: DateTime<Utc>, end: DateTime<Utc>, max_days: i64) -> Vec<(DateTime<Utc>, DateTime<Utc>)> {
    let mut out = Vec::new();
    let mut cursor = start;
    let step = Duration::days(max_days.max(1));
    while cursor <= end {
        let chunk_end = (cursor + step - Duration::minutes(1)).min(end);
        out.push((cursor, chunk_end));
        cursor = chunk_end + Duration::minutes(1);
    }
    out
}

fn month_start(year: i32, month: u32) -> DateTime<Utc> {
    Utc.with_ymd_and_hms(year, month, 1, 0, 0, 0).unwrap()
}

fn months_between(start: DateTime<Utc>, end: DateTime<Utc>) -> Vec<(i32, u32)> {
    let mut out = Vec::new();
    let (mut y, mut m) = (start.year(), start.month());
    while month_start(y, m) <= end {
        out.push((y, m));
        if m == 12 {
            y += 1;
            m = 1;
        } else {
            m += 1;
        }
    }
    out
}

fn last_day(year: i32, month: u32) -> NaiveDate {
    let next = if month == 12 {
        NaiveDate::from_ymd_opt(year + 1, 1, 1)
    } else {
        NaiveDate::from_ymd_opt(year, month + 1, 1)
    };
    next.unwrap().pred_opt().unwrap()
}

impl NoaaClients {
    pub fn water_level_url(&self, station: &str, start: DateTime<Utc>, end: DateTime<Utc>, datum: Datum, interval: Interval) -> String {
        let c = &self.config().coops;
        format!(
            "{}?product={}&application={}&begin_date={}&end_date={}&station={}&time_zone=gmt&units=metric&datum={}&format=json",
            c.base_url,
            interval.product(),
            c.application,
            start.format("%Y%m%d%%20%H:%M"),
            end.format("%Y%m%d%%20%H:%M"),
            station,
            datum.code()
        )
    }

    pub fn monthly_mean_url(&self, station: &str, begin: NaiveDate, end: NaiveDate, datum: Datum) -> String {
        let c = &self.config().coops;
        format!(
            "{}?product=monthly_mean&application={}&begin_date={}&end_date={}&station={}&time_zone=gmt&units=metric&datum={}&format=csv",
            c.base_url,
            c.application,
            begin.format("%Y%m%d"),
            end.format("%Y%m%d"),
            station,
            datum.code()
        )
    }

    /// Water level at a tide station in meters relative to `datum`.
    pub fn fetch_water_level(
        &self,
        station: &str,
        tr: &TimeRange,
        datum: Datum,
        interval: Interval,
    ) -> Result<Fetched<StationSeries>, ClientError> {
        let c = &self.config().coops;
        let max_days = match interval {
            Interval::SixMinute => c.max_days_water_level,
            Interval::Hourly => c.max_days_hourly_height,
        };
        let chunks = split_range(tr.start, tr.end, max_days);
        let closed = self.is_closed(DatasetFamily::CoOpsRealtime, tr.end);
        let mut meta: Option<StationMeta> = None;
        let mut points: Vec<(DateTime<Utc>, Option<f64>)> = Vec::new();
        let (mut flagged, mut verified, mut preliminary) = (0, 0, 0);
        let mut retrieved_at: Option<DateTime<Utc>> = None;
        for &(s, e) in &chunks {
            let url = self.water_level_url(station, s, e, datum, interval);
            let rec = self.get(url.clone(), closed)?;
            retrieved_at = retrieved_at.max(Some(rec.fetched_at));
            let chunk = parse_water_level_json(&rec.bytes, station, &url, &c.bad_flag_positions)?;
            meta = meta.or(chunk.station);
            flagged += chunk.flagged;
            verified += chunk.verified;
            preliminary += chunk.preliminary;
            points.extend(chunk.points);
        }
        points.sort_by_key(|p| p.0);
        points.dedup_by_key(|p| p.0);
        points.retain(|p| tr.contains(p.0));
        if points.iter().all(|p| p.1.is_none()) {
            return Err(ClientError::GapOnly(format!(
                "station {station} returned no valid {} values for {}..{}",
                interval.product(),
                tr.start.format("%Y-%m-%d"),
                tr.end.format("%Y-%m-%d")
            )));
        }
        let masked = points.iter().filter(|p| p.1.is_none()).count();
        let (timestamps, values): (Vec<_>, Vec<_>) = points.into_iter().unzip();
        let series = Series::new(timestamps, values, Unit::Meters, Some(datum), Variable::WaterLevel)
            .map_err(|e| ClientError::FormatError(e.to_string()))?;
        let station_meta = meta.unwrap_or(StationMeta {
            id: station.to_string(),
            name: station.to_string(),
            lat: f64::NAN,
            lon: f64::NAN,
        });

        let mut steps = vec![format!(
            "requested CO-OPS product `{}` for station {station}, datum {}, metric units, GMT",
            interval.product(),
            datum.code()
        )];
        if chunks.len() > 1 {
            steps.push(format!(
                "split request into {} chunks of at most {max_days} days and concatenated",
                chunks.len()
            ));
        }
        steps.push(format!(
            "masked {masked} of {} points (empty values or {flagged} quality-flagged)",
            series.len()
        ));
        if verified + preliminary > 0 {
            steps.push(format!("quality: {verified} verified, {preliminary} preliminary points"));
        } else {
            steps.push("verified data requested (provider default for this product)".into());
        }
        let provenance = Provenance {
            source_name: DatasetFamily::CoOpsRealtime.source_name().to_string(),
            dataset_id: format!("coops:{}", interval.product()),
            station_or_grid: format!("station {} ({})", station_meta.id, station_meta.name),
            unit: Unit::Meters,
            datum: Some(datum),
            time_span: *tr,
            retrieved_at: retrieved_at.unwrap_or(tr.end),
            processing_steps: steps,
        };
        Ok(Fetched {
            data: StationSeries {
                station: station_meta,
                series,
            },
            provenance,
        })
    }

    /// Monthly mean sea level, one point per calendar month at month start.
    pub fn fetch_monthly_mean(
        &self,
        station: &str,
        tr: &TimeRange,
        datum: Datum,
    ) -> Result<Fetched<Series>, ClientError> {
        let months = months_between(tr.start, tr.end);
        let per_chunk = (self.config().coops.max_days_monthly_mean / 31).max(1) as usize;
        let closed = self.is_closed(DatasetFamily::CoOpsMonthly, tr.end);
        let mut rows = Vec::new();
        let mut retrieved_at = None;
        let chunks: Vec<&[(i32, u32)]> = months.chunks(per_chunk).collect();
        for chunk in &chunks {
            let (fy, fm) = chunk[0];
            let (ly, lm) = chunk[chunk.len() - 1];
            let url = self.monthly_mean_url(
                station,
                NaiveDate::from_ymd_opt(fy, fm, 1).unwrap(),
                last_day(ly, lm),
                datum,
            );
            let rec = self.get(url.clone(), closed)?;
            retrieved_at = retrieved_at.max(Some(rec.fetched_at));
            rows.extend(parse_monthly_csv(&rec.bytes, station, &url)?);
        }
        let values: Vec<Option<f64>> = months
            .iter()
            .map(|&(y, m)| rows.iter().find(|r| r.0 == y && r.1 == m).and_then(|r| r.2))
            .collect();
        if values.iter().all(Option::is_none) {
            return Err(ClientError::GapOnly(format!(
                "station {station} has no monthly means for {}..{}",
                tr.start.format("%Y-%m"),
                tr.end.format("%Y-%m")
            )));
        }
        let missing = values.iter().filter(|v| v.is_none()).count();
        let timestamps = months.iter().map(|&(y, m)| month_start(y, m)).collect();
        let series = Series::new(timestamps, values, Unit::Meters, Some(datum), Variable::MonthlyMeanSeaLevel)
            .map_err(|e| ClientError::FormatError(e.to_string()))?;
        let mut steps = vec![format!(
            "requested CO-OPS product `monthly_mean` (CSV) for station {station}, datum {}, metric units",
            datum.code()
        )];
        if chunks.len() > 1 {
            steps.push(format!("split request into {} chunks and concatenated", chunks.len()));
        }
        steps.push(format!("took the MSL column as monthly mean sea level; {missing} months missing"));
        let provenance = Provenance {
            source_name: DatasetFamily::CoOpsMonthly.source_name().to_string(),
            dataset_id: "coops:monthly_mean".into(),
            station_or_grid: format!("station {station}"),
            unit: Unit::Meters,
            datum: Some(datum),
            time_span: *tr,
            retrieved_at: retrieved_at.unwrap_or(tr.end),
            processing_steps: steps,
        };
        Ok(Fetched { data: series, provenance })
    }
}
