//! Shared domain types: variables, units, datums, selectors, time ranges,
//! series, grids, provenance and the four-field tool payload.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coverage::CoverageTable;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("empty time range: start {start} is not before end {end}")]
    EmptyRange {
        start: DateTime<Utc>,
        end: DateTime<Utc>,
    },
    #[error("resolution {resolution} is not available for {variable}")]
    ResolutionMismatch {
        variable: Variable,
        resolution: Resolution,
    },
    #[error("{start}..{end} does not overlap the {dataset} coverage window {coverage}")]
    OutOfCoverage {
        dataset: String,
        start: DateTime<Utc>,
        end: DateTime<Utc>,
        coverage: String,
    },
    #[error("invalid station: {0}")]
    InvalidStation(String),
    #[error("invalid selector: {0}")]
    InvalidSelector(String),
    #[error("invalid series: {0}")]
    InvalidSeries(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("unknown {kind} code '{code}'")]
    UnknownCode { kind: &'static str, code: String },
}

/// Physical quantity a query asks about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variable {
    WaterLevel,
    MonthlyMeanSeaLevel,
    CoraZeta,
    SeaSurfaceTemperature,
}

impl Variable {
    pub const ALL: [Variable; 4] = [
        Variable::WaterLevel,
        Variable::MonthlyMeanSeaLevel,
        Variable::CoraZeta,
        Variable::SeaSurfaceTemperature,
    ];

    pub fn family(self) -> DatasetFamily {
        match self {
            Variable::WaterLevel => DatasetFamily::CoOpsRealtime,
            Variable::MonthlyMeanSeaLevel => DatasetFamily::CoOpsMonthly,
            Variable::CoraZeta => DatasetFamily::Cora,
            Variable::SeaSurfaceTemperature => DatasetFamily::Crw,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Variable::WaterLevel => "water level",
            Variable::MonthlyMeanSeaLevel => "monthly mean sea level",
            Variable::CoraZeta => "reanalysis water level (zeta)",
            Variable::SeaSurfaceTemperature => "sea surface temperature",
        }
    }

    pub fn allowed_resolutions(self) -> &'static [Resolution] {
        match self {
            Variable::WaterLevel => &[Resolution::SixMinute, Resolution::Hourly],
            Variable::MonthlyMeanSeaLevel => &[Resolution::Monthly],
            Variable::CoraZeta => &[Resolution::Hourly],
            Variable::SeaSurfaceTemperature => &[Resolution::Daily],
        }
    }

    pub fn default_resolution(self) -> Resolution {
        match self {
            Variable::WaterLevel | Variable::CoraZeta => Resolution::Hourly,
            Variable::MonthlyMeanSeaLevel => Resolution::Monthly,
            Variable::SeaSurfaceTemperature => Resolution::Daily,
        }
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Canonical unit of a variable: meters for the water-level family, Celsius for SST.
pub fn canonical_unit(v: Variable) -> Unit {
    match v {
        Variable::WaterLevel | Variable::MonthlyMeanSeaLevel | Variable::CoraZeta => Unit::Meters,
        Variable::SeaSurfaceTemperature => Unit::Celsius,
    }
}

/// Provider family backing a variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetFamily {
    #[serde(rename = "coops_realtime")]
    CoOpsRealtime,
    #[serde(rename = "coops_monthly")]
    CoOpsMonthly,
    Cora,
    Crw,
}

impl DatasetFamily {
    pub fn key(self) -> &'static str {
        match self {
            DatasetFamily::CoOpsRealtime => "coops_realtime",
            DatasetFamily::CoOpsMonthly => "coops_monthly",
            DatasetFamily::Cora => "cora",
            DatasetFamily::Crw => "crw",
        }
    }

    pub fn source_name(self) -> &'static str {
        match self {
            DatasetFamily::CoOpsRealtime | DatasetFamily::CoOpsMonthly => "NOAA CO-OPS",
            DatasetFamily::Cora => "NOAA Coastal Ocean Reanalysis (CORA)",
            DatasetFamily::Crw => "NOAA Coral Reef Watch (CRW)",
        }
    }

    pub fn variable(self) -> Variable {
        match self {
            DatasetFamily::CoOpsRealtime => Variable::WaterLevel,
            DatasetFamily::CoOpsMonthly => Variable::MonthlyMeanSeaLevel,
            DatasetFamily::Cora => Variable::CoraZeta,
            DatasetFamily::Crw => Variable::SeaSurfaceTemperature,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Unit {
    #[serde(rename = "m")]
    Meters,
    #[serde(rename = "ft")]
    Feet,
    #[serde(rename = "degC")]
    Celsius,
    #[serde(rename = "degF")]
    Fahrenheit,
    /// Similarity scores and other pure numbers.
    #[serde(rename = "1")]
    Dimensionless,
}

impl Unit {
    pub fn code(self) -> &'static str {
        match self {
            Unit::Meters => "m",
            Unit::Feet => "ft",
            Unit::Celsius => "degC",
            Unit::Fahrenheit => "degF",
            Unit::Dimensionless => "1",
        }
    }

    /// Short label used in prose and figures.
    pub fn symbol(self) -> &'static str {
        match self {
            Unit::Meters => "m",
            Unit::Feet => "ft",
            Unit::Celsius => "°C",
            Unit::Fahrenheit => "°F",
            Unit::Dimensionless => "",
        }
    }

    /// Converts a value into the metric counterpart of this unit.
    pub fn to_metric(self, value: f64) -> (Unit, f64) {
        match self {
            Unit::Feet => (Unit::Meters, value * 0.3048),
            Unit::Fahrenheit => (Unit::Celsius, (value - 32.0) * 5.0 / 9.0),
            other => (other, value),
        }
    }
}

impl FromStr for Unit {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "m" | "meter" | "meters" | "metre" | "metres" => Ok(Unit::Meters),
            "ft" | "feet" | "foot" => Ok(Unit::Feet),
            "degc" | "celsius" | "c" | "degree_c" | "degrees_c" | "degree_celsius" => Ok(Unit::Celsius),
            "degf" | "fahrenheit" | "f" => Ok(Unit::Fahrenheit),
            "1" | "dimensionless" => Ok(Unit::Dimensionless),
            _ => Err(ModelError::UnknownCode {
                kind: "unit",
                code: s.to_string(),
            }),
        }
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// Vertical reference surface. Metadata and a selection parameter only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Datum {
    Msl,
    Mllw,
    Mlw,
    Mtl,
    Mhw,
    Mhhw,
    Navd,
    Stnd,
}

impl Datum {
    pub const ALL: [Datum; 8] = [
        Datum::Msl,
        Datum::Mllw,
        Datum::Mlw,
        Datum::Mtl,
        Datum::Mhw,
        Datum::Mhhw,
        Datum::Navd,
        Datum::Stnd,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Datum::Msl => "MSL",
            Datum::Mllw => "MLLW",
            Datum::Mlw => "MLW",
            Datum::Mtl => "MTL",
            Datum::Mhw => "MHW",
            Datum::Mhhw => "MHHW",
            Datum::Navd => "NAVD",
            Datum::Stnd => "STND",
        }
    }
}

impl Default for Datum {
    fn default() -> Self {
        Datum::Msl
    }
}

impl FromStr for Datum {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let upper = s.trim().to_ascii_uppercase();
        Datum::ALL
            .into_iter()
            .find(|d| d.code() == upper)
            .ok_or(ModelError::UnknownCode {
                kind: "datum",
                code: s.to_string(),
            })
    }
}

impl fmt::Display for Datum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Station {
    pub id: String,
    pub name: String,
    pub lat: f64,
    pub lon: f64,
    pub supported_datums: BTreeSet<Datum>,
}

impl Station {
    pub fn new(
        id: impl Into<String>,
        name: impl Into<String>,
        lat: f64,
        lon: f64,
        supported_datums: BTreeSet<Datum>,
    ) -> Result<Self, ModelError> {
        let station = Station {
            id: id.into(),
            name: name.into(),
            lat,
            lon,
            supported_datums,
        };
        station.validate()?;
        Ok(station)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.id.trim().is_empty() {
            return Err(ModelError::InvalidStation("empty station id".into()));
        }
        check_lat_lon(self.lat, self.lon).map_err(ModelError::InvalidStation)?;
        if self.supported_datums.is_empty() {
            return Err(ModelError::InvalidStation(format!(
                "station {} lists no supported datums",
                self.id
            )));
        }
        Ok(())
    }

    pub fn point(&self) -> GeoPoint {
        GeoPoint {
            lat: self.lat,
            lon: self.lon,
        }
    }
}

fn check_lat_lon(lat: f64, lon: f64) -> Result<(), String> {
    if !(-90.0..=90.0).contains(&lat) {
        return Err(format!("latitude {lat} outside [-90, 90]"));
    }
    if !(-180.0..=180.0).contains(&lon) {
        return Err(format!("longitude {lon} outside [-180, 180]"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self, ModelError> {
        check_lat_lon(lat, lon).map_err(ModelError::InvalidSelector)?;
        Ok(GeoPoint { lat, lon })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

impl BBox {
    pub fn new(lat_min: f64, lat_max: f64, lon_min: f64, lon_max: f64) -> Result<Self, ModelError> {
        let bbox = BBox {
            lat_min,
            lat_max,
            lon_min,
            lon_max,
        };
        bbox.validate()?;
        Ok(bbox)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        check_lat_lon(self.lat_min, self.lon_min).map_err(ModelError::InvalidSelector)?;
        check_lat_lon(self.lat_max, self.lon_max).map_err(ModelError::InvalidSelector)?;
        if !(self.lat_min < self.lat_max) || !(self.lon_min < self.lon_max) {
            return Err(ModelError::InvalidSelector(format!(
                "bbox requires lat_min < lat_max and lon_min < lon_max, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn contains(&self, lat: f64, lon: f64) -> bool {
        lat >= self.lat_min && lat <= self.lat_max && lon >= self.lon_min && lon <= self.lon_max
    }
}

/// Where a query is located.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpatialSelector {
    Station(String),
    Point(GeoPoint),
    #[serde(rename = "bbox")]
    BBox(BBox),
    Region(String),
}

impl SpatialSelector {
    pub fn validate(&self) -> Result<(), ModelError> {
        match self {
            SpatialSelector::Station(id) if id.trim().is_empty() => {
                Err(ModelError::InvalidSelector("empty station id".into()))
            }
            SpatialSelector::Point(p) => GeoPoint::new(p.lat, p.lon).map(|_| ()),
            SpatialSelector::BBox(b) => b.validate(),
            SpatialSelector::Region(key) if key.trim().is_empty() => {
                Err(ModelError::InvalidSelector("empty region key".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resolution {
    SixMinute,
    Hourly,
    Daily,
    Monthly,
}

impl Resolution {
    pub fn label(self) -> &'static str {
        match self {
            Resolution::SixMinute => "6-minute",
            Resolution::Hourly => "hourly",
            Resolution::Daily => "daily",
            Resolution::Monthly => "monthly",
        }
    }
}

impl fmt::Display for Resolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Closed UTC interval `[start, end]` at a sampling resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeRange {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
    pub resolution: Resolution,
}

impl TimeRange {
    pub fn new(start: DateTime<Utc>, end: DateTime<Utc>, resolution: Resolution) -> Result<Self, ModelError> {
        if start >= end {
            return Err(ModelError::EmptyRange { start, end });
        }
        Ok(TimeRange {
            start,
            end,
            resolution,
        })
    }

    pub fn with_resolution(self, resolution: Resolution) -> Self {
        TimeRange { resolution, ..self }
    }

    pub fn contains(&self, t: DateTime<Utc>) -> bool {
        t >= self.start && t <= self.end
    }

    pub fn duration(&self) -> Duration {
        self.end - self.start
    }
}

/// Range accepted by [`validate_time_range`], possibly clamped to coverage.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckedRange {
    pub range: TimeRange,
    pub clamp_note: Option<String>,
}

/// Checks ordering, resolution legality and dataset coverage; clamps partial overlaps.
pub fn validate_time_range(
    tr: TimeRange,
    v: Variable,
    coverage: &CoverageTable,
) -> Result<CheckedRange, ModelError> {
    if tr.start >= tr.end {
        return Err(ModelError::EmptyRange {
            start: tr.start,
            end: tr.end,
        });
    }
    if !v.allowed_resolutions().contains(&tr.resolution) {
        return Err(ModelError::ResolutionMismatch {
            variable: v,
            resolution: tr.resolution,
        });
    }
    let window = coverage.window(v.family());
    let cov_end = window.end.unwrap_or(DateTime::<Utc>::MAX_UTC);
    if tr.end < window.start || tr.start > cov_end {
        return Err(ModelError::OutOfCoverage {
            dataset: v.family().key().to_string(),
            start: tr.start,
            end: tr.end,
            coverage: window.describe(),
        });
    }
    let start = tr.start.max(window.start);
    let end = tr.end.min(cov_end);
    if start >= end {
        return Err(ModelError::OutOfCoverage {
            dataset: v.family().key().to_string(),
            start: tr.start,
            end: tr.end,
            coverage: window.describe(),
        });
    }
    let clamp_note = (start != tr.start || end != tr.end).then(|| {
        format!(
            "requested range {}..{} clamped to {} coverage {}..{}",
            tr.start.to_rfc3339(),
            tr.end.to_rfc3339(),
            v.family().key(),
            start.to_rfc3339(),
            end.to_rfc3339()
        )
    });
    Ok(CheckedRange {
        range: TimeRange { start, end, ..tr },
        clamp_note,
    })
}

/// A timestamped, unit-tagged sequence. `None` marks a missing value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub timestamps: Vec<DateTime<Utc>>,
    pub values: Vec<Option<f64>>,
    pub unit: Unit,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub datum: Option<Datum>,
    pub variable: Variable,
}

impl Series {
    pub fn new(
        timestamps: Vec<DateTime<Utc>>,
        values: Vec<Option<f64>>,
        unit: Unit,
        datum: Option<Datum>,
        variable: Variable,
    ) -> Result<Self, ModelError> {
        let series = Series {
            timestamps,
            values,
            unit,
            datum,
            variable,
        };
        series.validate()?;
        Ok(series)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.timestamps.len() != self.values.len() {
            return Err(ModelError::InvalidSeries(format!(
                "{} timestamps but {} values",
                self.timestamps.len(),
                self.values.len()
            )));
        }
        if let Some(w) = self.timestamps.windows(2).find(|w| w[0] >= w[1]) {
            return Err(ModelError::InvalidSeries(format!(
                "timestamps not strictly ascending at {}",
                w[1].to_rfc3339()
            )));
        }
        if self.unit != canonical_unit(self.variable) {
            return Err(ModelError::InvalidSeries(format!(
                "unit {} is not the canonical unit for {}",
                self.unit.code(),
                self.variable
            )));
        }
        if self.values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(ModelError::InvalidSeries("non-finite unmasked value".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn valid_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }

    pub fn iter_valid(&self) -> impl Iterator<Item = (DateTime<Utc>, f64)> + '_ {
        self.timestamps
            .iter()
            .zip(&self.values)
            .filter_map(|(t, v)| v.map(|v| (*t, v)))
    }
}

/// A 2-D georeferenced field at one timestamp, row-major by latitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSlice {
    pub lats: Vec<f64>,
    pub lons: Vec<f64>,
    pub values: Vec<Option<f64>>,
    pub unit: Unit,
    pub timestamp: DateTime<Utc>,
    pub variable: Variable,
}

impl GridSlice {
    pub fn new(
        lats: Vec<f64>,
        lons: Vec<f64>,
        values: Vec<Option<f64>>,
        unit: Unit,
        timestamp: DateTime<Utc>,
        variable: Variable,
    ) -> Result<Self, ModelError> {
        let grid = GridSlice {
            lats,
            lons,
            values,
            unit,
            timestamp,
            variable,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.values.len() != self.lats.len() * self.lons.len() {
            return Err(ModelError::InvalidGrid(format!(
                "{} values for a {}x{} grid",
                self.values.len(),
                self.lats.len(),
                self.lons.len()
            )));
        }
        for (name, axis) in [("lats", &self.lats), ("lons", &self.lons)] {
            if axis.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(ModelError::InvalidGrid(format!("{name} not strictly ascending")));
            }
        }
        if self.values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(ModelError::InvalidGrid("non-finite unmasked value".into()));
        }
        Ok(())
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.values[row * self.lons.len() + col]
    }

    pub fn unmasked_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }
}

/// Descriptive statistics over the unmasked values of a series (population std).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub std: f64,
    pub argmin_time: DateTime<Utc>,
    pub argmax_time: DateTime<Utc>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source_name: String,
    pub dataset_id: String,
    pub station_or_grid: String,
    pub unit: Unit,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub datum: Option<Datum>,
    pub time_span: TimeRange,
    pub retrieved_at: DateTime<Utc>,
    pub processing_steps: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FigureKind {
    TimeSeries,
    Map,
}

/// A rendered figure in the content-addressed store.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FigureRef {
    pub id: String,
    pub path: String,
    pub url: String,
    pub alt_text: String,
    pub kind: FigureKind,
}

/// Per-location failure inside a fan-out call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubCallError {
    pub location: String,
    pub error: String,
    pub message: String,
}

/// The `others` block of a [`ToolResponse`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseMeta {
    pub function: String,
    pub arguments: BTreeMap<String, serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<Unit>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_span: Option<TimeRange>,
    pub provenance: Vec<Provenance>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<SubCallError>,
}

/// Standard four-field payload returned by every registered function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolResponse {
    pub text: String,
    pub images: Vec<FigureRef>,
    pub json_data: serde_json::Value,
    pub others: ResponseMeta,
}

impl ToolResponse {
    pub fn has_data(&self) -> bool {
        match &self.json_data {
            serde_json::Value::Null => false,
            serde_json::Value::Object(m) => !m.is_empty(),
            serde_json::Value::Array(a) => !a.is_empty(),
            _ => true,
        }
    }

    /// Returns every violated payload invariant; empty when valid.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.text.trim().is_empty() {
            out.push("text is empty".to_string());
        }
        if self.has_data() {
            if self.others.unit.is_none() {
                out.push("others.unit missing while json_data is non-empty".into());
            }
            if self.others.time_span.is_none() {
                out.push("others.time_span missing while json_data is non-empty".into());
            }
            if self.others.provenance.is_empty() {
                out.push("no provenance record for a data product".into());
            }
        }
        for (i, p) in self.others.provenance.iter().enumerate() {
            if p.processing_steps.is_empty() {
                out.push(format!("provenance[{i}] has no processing steps"));
            }
            if p.time_span.start >= p.time_span.end {
                out.push(format!("provenance[{i}] has an empty time span"));
            }
        }
        for (i, f) in self.images.iter().enumerate() {
            if f.path.is_empty() || f.alt_text.is_empty() {
                out.push(format!("images[{i}] lacks a path or alt text"));
            }
        }
        out
    }
}
