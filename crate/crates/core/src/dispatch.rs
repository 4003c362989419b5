//! Function registry, argument validation and normalization, and the default
//! handlers that turn provider data into [`ToolResponse`] payloads.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use chrono::{DateTime, NaiveDate, NaiveDateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::analysis::{grid_summary, linear_trend, summary_stats, threshold_mask, AnalysisError};
use crate::clients::{ClientError, Interval, NoaaClients};
use crate::coverage::CoverageTable;
use crate::gazetteer::{Gazetteer, Place};
use crate::intent::{resolve_time_expression, tokenize, Stat, StructuredQuery};
use crate::model::{
    validate_time_range, BBox, Datum, FigureRef, GeoPoint, ModelError, Provenance, Resolution, ResponseMeta, Series,
    SpatialSelector, SubCallError, SummaryStats, TimeRange, ToolResponse, Unit, Variable,
};
use crate::render::{fixed2, Colormap, FigureStore, RenderError, Trace};
use crate::retrieval::{DocStore, RetrievalError};

/// SST threshold associated with tropical cyclone intensification, °C.
pub const CYCLONE_SST_THRESHOLD_C: f64 = 26.5;

/// Longest accepted span per request kind, in days.
const MAX_SPAN_SIX_MINUTE_DAYS: i64 = 366;
const MAX_SPAN_HOURLY_DAYS: i64 = 3660;
const MAX_SPAN_MONTHLY_DAYS: i64 = 200 * 366;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArgViolation {
    pub param: String,
    pub problem: String,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DispatchError {
    #[error("unknown function '{name}'")]
    UnknownFunction { name: String },
    #[error("function '{name}' is already registered")]
    DuplicateName { name: String },
    #[error("invalid arguments for {function}: {}", summarize(.violations))]
    ArgValidation {
        function: String,
        violations: Vec<ArgViolation>,
    },
    #[error("{function}: upstream {kind}: {message}")]
    UpstreamFailure {
        function: String,
        kind: String,
        message: String,
        retryable: bool,
    },
    #[error("{function}: {message}")]
    Analysis { function: String, message: String },
    #[error("invalid structured query: {0}")]
    InvalidQuery(String),
    #[error("{function} failed internally: {message}")]
    Internal { function: String, message: String },
}

fn summarize(v: &[ArgViolation]) -> String {
    v.iter()
        .map(|v| format!("{}: {}", v.param, v.problem))
        .collect::<Vec<_>>()
        .join("; ")
}

impl DispatchError {
    pub fn kind(&self) -> &'static str {
        match self {
            DispatchError::UnknownFunction { .. } => "UnknownFunction",
            DispatchError::DuplicateName { .. } => "DuplicateName",
            DispatchError::ArgValidation { .. } => "ArgValidation",
            DispatchError::UpstreamFailure { .. } => "UpstreamFailure",
            DispatchError::Analysis { .. } => "AnalysisError",
            DispatchError::InvalidQuery(_) => "InvalidQuery",
            DispatchError::Internal { .. } => "Internal",
        }
    }

    pub fn retryable(&self) -> bool {
        matches!(self, DispatchError::UpstreamFailure { retryable: true, .. })
    }

    /// Structured error body for API responses.
    pub fn to_json(&self) -> Value {
        let mut body = json!({ "error": self.kind(), "message": self.to_string() });
        match self {
            DispatchError::ArgValidation { violations, function } => {
                body["function"] = json!(function);
                body["violations"] = json!(violations);
            }
            DispatchError::UpstreamFailure { kind, retryable, function, .. } => {
                body["function"] = json!(function);
                body["upstream_kind"] = json!(kind);
                body["retryable"] = json!(retryable);
            }
            DispatchError::UnknownFunction { name } | DispatchError::DuplicateName { name } => {
                body["function"] = json!(name);
            }
            DispatchError::Analysis { function, .. } | DispatchError::Internal { function, .. } => {
                body["function"] = json!(function);
            }
            DispatchError::InvalidQuery(_) => {}
        }
        body
    }

    fn upstream(function: &str, e: ClientError) -> Self {
        DispatchError::UpstreamFailure {
            function: function.to_string(),
            kind: e.kind().to_string(),
            retryable: e.retryable(),
            message: e.to_string(),
        }
    }

    fn analysis(function: &str, e: AnalysisError) -> Self {
        DispatchError::Analysis {
            function: function.to_string(),
            message: e.to_string(),
        }
    }

    fn render(function: &str, e: RenderError) -> Self {
        DispatchError::Internal {
            function: function.to_string(),
            message: format!("figure rendering failed: {e}"),
        }
    }
}

/// How a date argument is read when it names a period rather than an instant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DateRole {
    Start,
    End,
    Day,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SemanticType {
    StationRef,
    Location,
    Region,
    Date { role: DateRole },
    Datum,
    Interval,
    Text,
    Integer { min: i64, max: i64 },
}

impl SemanticType {
    fn name(&self) -> &'static str {
        match self {
            SemanticType::StationRef => "station_ref",
            SemanticType::Location => "location",
            SemanticType::Region => "region",
            SemanticType::Date { .. } => "date",
            SemanticType::Datum => "datum",
            SemanticType::Interval => "interval",
            SemanticType::Text => "text",
            SemanticType::Integer { .. } => "integer",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub semantic: SemanticType,
    pub required: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enum_domain: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<Value>,
    pub description: String,
}

impl ParamSpec {
    pub fn required(name: &str, semantic: SemanticType, description: &str) -> Self {
        ParamSpec {
            name: name.into(),
            semantic,
            required: true,
            enum_domain: None,
            default: None,
            description: description.into(),
        }
    }

    pub fn optional(name: &str, semantic: SemanticType, default: Value, description: &str) -> Self {
        let enum_domain = match semantic {
            SemanticType::Datum => Some(Datum::ALL.iter().map(|d| d.code().to_string()).collect()),
            SemanticType::Interval => Some(vec!["hourly".into(), "6min".into()]),
            _ => None,
        };
        ParamSpec {
            name: name.into(),
            semantic,
            required: false,
            enum_domain,
            default: Some(default),
            description: description.into(),
        }
    }
}

/// Options the dispatcher passes to handlers.
#[derive(Debug, Clone, Copy)]
pub struct CallOptions {
    pub render_figures: bool,
}

impl Default for CallOptions {
    fn default() -> Self {
        CallOptions { render_figures: true }
    }
}

pub type Handler = Arc<dyn Fn(&Args, CallOptions) -> Result<ToolResponse, DispatchError> + Send + Sync>;

#[derive(Clone)]
pub struct FunctionDescriptor {
    pub name: String,
    pub summary: String,
    pub params: Vec<ParamSpec>,
    /// Variable whose coverage window bounds `begin`/`end`.
    pub variable: Option<Variable>,
    pub handler: Handler,
}

impl std::fmt::Debug for FunctionDescriptor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FunctionDescriptor")
            .field("name", &self.name)
            .field("params", &self.params)
            .finish_non_exhaustive()
    }
}

/// A call in the chat-completions tool-call shape: a name plus an arguments object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionCall {
    pub name: String,
    #[serde(default)]
    pub arguments: Value,
}

impl FunctionCall {
    pub fn new(name: &str, arguments: Value) -> Self {
        FunctionCall {
            name: name.into(),
            arguments,
        }
    }

    /// Accepts `{name, arguments}` or `{function: {name, arguments}}`, where
    /// `arguments` may be an object or a JSON-encoded string.
    pub fn from_tool_call(v: &Value) -> Result<Self, DispatchError> {
        let inner = v.get("function").unwrap_or(v);
        let name = inner
            .get("name")
            .and_then(Value::as_str)
            .ok_or_else(|| DispatchError::ArgValidation {
                function: String::new(),
                violations: vec![ArgViolation {
                    param: "name".into(),
                    problem: "tool call lacks a function name".into(),
                }],
            })?;
        let arguments = match inner.get("arguments") {
            Some(Value::String(s)) if s.trim().is_empty() => json!({}),
            Some(Value::String(s)) => serde_json::from_str(s).map_err(|e| DispatchError::ArgValidation {
                function: name.to_string(),
                violations: vec![ArgViolation {
                    param: "arguments".into(),
                    problem: format!("not valid JSON: {e}"),
                }],
            })?,
            Some(other) => other.clone(),
            None => json!({}),
        };
        Ok(FunctionCall::new(name, arguments))
    }
}

/// Normalized, validated arguments handed to a handler.
#[derive(Debug, Clone, PartialEq)]
pub struct Args {
    pub function: String,
    pub values: BTreeMap<String, Value>,
    /// Display labels for place-valued parameters.
    pub labels: BTreeMap<String, String>,
    /// Normalization and clamping notes, copied into processing steps.
    pub notes: Vec<String>,
    /// Checked range built from `begin`/`end`, when present.
    pub time: Option<TimeRange>,
}

impl Args {
    pub fn str(&self, name: &str) -> &str {
        self.values.get(name).and_then(Value::as_str).unwrap_or_default()
    }

    pub fn label(&self, name: &str) -> String {
        self.labels.get(name).cloned().unwrap_or_else(|| self.str(name).to_string())
    }

    pub fn u64(&self, name: &str) -> u64 {
        self.values.get(name).and_then(Value::as_u64).unwrap_or_default()
    }

    pub fn point(&self, name: &str) -> GeoPoint {
        let v = &self.values[name];
        GeoPoint {
            lat: v["lat"].as_f64().unwrap_or_default(),
            lon: v["lon"].as_f64().unwrap_or_default(),
        }
    }

    pub fn bbox(&self, name: &str) -> BBox {
        let v = &self.values[name];
        let f = |k: &str| v[k].as_f64().unwrap_or_default();
        BBox {
            lat_min: f("lat_min"),
            lat_max: f("lat_max"),
            lon_min: f("lon_min"),
            lon_max: f("lon_max"),
        }
    }

    pub fn datum(&self) -> Datum {
        self.str("datum").parse().unwrap_or_default()
    }

    pub fn day(&self, name: &str) -> NaiveDate {
        NaiveDate::parse_from_str(self.str(name), "%Y-%m-%d").unwrap_or_default()
    }
}

fn violation(param: &str, problem: impl Into<String>) -> ArgViolation {
    ArgViolation {
        param: param.into(),
        problem: problem.into(),
    }
}

fn describe(v: &Value) -> String {
    let s = v.to_string();
    if s.chars().count() > 60 {
        format!("{}…", s.chars().take(60).collect::<String>())
    } else {
        s
    }
}

fn parse_instant(s: &str) -> Option<DateTime<Utc>> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.with_timezone(&Utc));
    }
    ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M:%S", "%Y-%m-%d %H:%M", "%Y%m%d %H:%M"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s.trim_end_matches('Z'), f).ok())
        .map(|n| n.and_utc())
}

fn parse_coords(s: &str) -> Option<Vec<f64>> {
    let parts: Vec<&str> = s.split([',', ';']).map(str::trim).collect();
    parts.iter().map(|p| p.parse::<f64>().ok().filter(|v| v.is_finite())).collect()
}

fn number_list(v: &Value) -> Option<Vec<f64>> {
    match v {
        Value::String(s) => parse_coords(s),
        Value::Array(a) => a.iter().map(Value::as_f64).collect(),
        _ => None,
    }
}

/// Shared state used by argument normalization.
#[derive(Debug, Clone)]
pub struct NormalizeContext {
    pub gazetteer: Arc<Gazetteer>,
    pub coverage: CoverageTable,
}

impl NormalizeContext {
    fn station(&self, v: &Value) -> Result<(String, String), String> {
        let raw = match v {
            Value::String(s) => s.trim().to_string(),
            Value::Number(n) if n.is_u64() => n.to_string(),
            other => return Err(format!("expected a station name or id, got {}", describe(other))),
        };
        if raw.is_empty() {
            return Err("empty station".into());
        }
        match self.gazetteer.lookup(&raw) {
            Some(Place::Station(s)) => Ok((s.id, s.name)),
            Some(Place::Region(r)) => Err(format!("'{}' is a region, not a tide station", r.name)),
            // Unlisted CO-OPS ids are seven digits; let the provider judge them.
            None if raw.len() == 7 && raw.bytes().all(|b| b.is_ascii_digit()) => Ok((raw.clone(), raw)),
            None => Err(format!("unknown station '{raw}'")),
        }
    }

    fn location(&self, v: &Value) -> Result<(Value, String), String> {
        let point = |lat: f64, lon: f64| -> Result<GeoPoint, String> { GeoPoint::new(lat, lon).map_err(|e| e.to_string()) };
        let (p, label) = match v {
            Value::String(s) => {
                if let Some(c) = parse_coords(s).filter(|c| c.len() == 2) {
                    (point(c[0], c[1])?, format!("{},{}", c[0], c[1]))
                } else {
                    match self.gazetteer.lookup(s) {
                        Some(Place::Station(st)) => (point(st.lat, st.lon)?, st.name),
                        Some(Place::Region(r)) => (point(r.lat, r.lon)?, r.name),
                        None => return Err(format!("unknown location '{}'", s.trim())),
                    }
                }
            }
            Value::Array(_) => match number_list(v).filter(|c| c.len() == 2) {
                Some(c) => (point(c[0], c[1])?, format!("{},{}", c[0], c[1])),
                None => return Err(format!("expected [lat, lon], got {}", describe(v))),
            },
            Value::Object(o) => match (o.get("lat").and_then(Value::as_f64), o.get("lon").and_then(Value::as_f64)) {
                (Some(lat), Some(lon)) => (point(lat, lon)?, format!("{lat},{lon}")),
                _ => return Err(format!("expected {{lat, lon}}, got {}", describe(v))),
            },
            other => return Err(format!("expected a place name or 'lat,lon', got {}", describe(other))),
        };
        Ok((json!({"name": label, "lat": p.lat, "lon": p.lon}), label))
    }

    fn region(&self, v: &Value) -> Result<(Value, String), String> {
        let from_box = |c: &[f64]| -> Result<(BBox, String), String> {
            let b = BBox::new(c[0], c[1], c[2], c[3]).map_err(|e| e.to_string())?;
            Ok((b, format!("{}..{}N {}..{}E", c[0], c[1], c[2], c[3])))
        };
        let (bbox, name, key) = match v {
            Value::String(s) => match parse_coords(s) {
                Some(c) if c.len() == 4 => {
                    let (b, n) = from_box(&c)?;
                    (b, n, None)
                }
                _ => match self.gazetteer.lookup(s) {
                    Some(Place::Region(r)) => (r.bbox, r.name, Some(r.key)),
                    Some(Place::Station(st)) => {
                        return Err(format!("'{}' is a station; give a region or bbox", st.name))
                    }
                    None => return Err(format!("unknown region '{}'", s.trim())),
                },
            },
            Value::Array(_) => match number_list(v).filter(|c| c.len() == 4) {
                Some(c) => {
                    let (b, n) = from_box(&c)?;
                    (b, n, None)
                }
                None => return Err(format!("expected [lat_min, lat_max, lon_min, lon_max], got {}", describe(v))),
            },
            Value::Object(o) => {
                let c: Option<Vec<f64>> = ["lat_min", "lat_max", "lon_min", "lon_max"]
                    .iter()
                    .map(|k| o.get(*k).and_then(Value::as_f64))
                    .collect();
                match c {
                    Some(c) => {
                        let (b, n) = from_box(&c)?;
                        (b, n, None)
                    }
                    None => return Err(format!("bbox object needs lat_min, lat_max, lon_min, lon_max; got {}", describe(v))),
                }
            }
            other => return Err(format!("expected a region name or bbox, got {}", describe(other))),
        };
        Ok((
            json!({
                "name": name, "key": key,
                "lat_min": bbox.lat_min, "lat_max": bbox.lat_max,
                "lon_min": bbox.lon_min, "lon_max": bbox.lon_max,
            }),
            name,
        ))
    }

    /// Returns the normalized value and an optional note.
    fn date(&self, v: &Value, role: DateRole) -> Result<(Value, Option<String>), String> {
        let raw = match v {
            Value::String(s) if !s.trim().is_empty() => s.trim().to_string(),
            Value::Number(n) if n.is_u64() => n.to_string(),
            other => return Err(format!("expected a date string, got {}", describe(other))),
        };
        let compact = (raw.len() == 8 && raw.bytes().all(|b| b.is_ascii_digit()))
            .then(|| NaiveDate::parse_from_str(&raw, "%Y%m%d").ok())
            .flatten();
        let (start, end) = if let Some(d) = compact {
            (d.and_hms_opt(0, 0, 0).unwrap().and_utc(), d.and_hms_opt(23, 59, 0).unwrap().and_utc())
        } else if let Some(t) = parse_instant(&raw) {
            (t, t)
        } else {
            let toks = tokenize(&raw);
            let words: Vec<&str> = toks.iter().map(|t| t.norm.as_str()).collect();
            let tr = resolve_time_expression(&words, Utc::now()).map_err(|e| format!("cannot read date '{raw}': {e}"))?;
            (tr.start, tr.end)
        };
        Ok(match role {
            DateRole::Start => (json!(start.format("%Y-%m-%dT%H:%M:%SZ").to_string()), None),
            DateRole::End => (json!(end.format("%Y-%m-%dT%H:%M:%SZ").to_string()), None),
            DateRole::Day => {
                let day = end.date_naive();
                let note = (start.date_naive() != day).then(|| format!("date '{raw}' names a period; used its last day {day}"));
                (json!(day.format("%Y-%m-%d").to_string()), note)
            }
        })
    }

    fn normalize(&self, spec: &ParamSpec, v: &Value) -> Result<(Value, Option<String>, Option<String>), String> {
        match &spec.semantic {
            SemanticType::StationRef => self.station(v).map(|(id, name)| (json!(id), Some(name), None)),
            SemanticType::Location => self.location(v).map(|(v, l)| (v, Some(l), None)),
            SemanticType::Region => self.region(v).map(|(v, l)| (v, Some(l), None)),
            SemanticType::Date { role } => self.date(v, *role).map(|(v, n)| (v, None, n)),
            SemanticType::Datum => {
                let s = v.as_str().ok_or_else(|| format!("expected a datum code, got {}", describe(v)))?;
                let d: Datum = s.parse().map_err(|_| {
                    format!(
                        "'{s}' is not one of {}",
                        spec.enum_domain.as_deref().unwrap_or_default().join(", ")
                    )
                })?;
                Ok((json!(d.code()), None, None))
            }
            SemanticType::Interval => {
                let s = v.as_str().ok_or_else(|| format!("expected an interval, got {}", describe(v)))?;
                let norm = match s.trim().to_ascii_lowercase().replace(['-', '_', ' '], "").as_str() {
                    "hourly" | "h" | "hour" | "1h" | "60min" => "hourly",
                    "6min" | "sixminute" | "6minute" | "6m" => "6min",
                    _ => return Err(format!("'{s}' is not one of hourly, 6min")),
                };
                Ok((json!(norm), None, None))
            }
            SemanticType::Text => match v.as_str().map(str::trim) {
                Some(s) if !s.is_empty() => Ok((json!(s), None, None)),
                _ => Err(format!("expected non-empty text, got {}", describe(v))),
            },
            SemanticType::Integer { min, max } => {
                let n = match v {
                    Value::Number(n) => n.as_i64().or_else(|| n.as_f64().filter(|f| f.fract() == 0.0).map(|f| f as i64)),
                    Value::String(s) => s.trim().parse::<i64>().ok(),
                    _ => None,
                }
                .ok_or_else(|| format!("expected an integer, got {}", describe(v)))?;
                if n < *min || n > *max {
                    return Err(format!("{n} outside [{min}, {max}]"));
                }
                Ok((json!(n), None, None))
            }
        }
    }
}

/// Registered functions in registration order.
pub struct Registry {
    functions: Vec<FunctionDescriptor>,
    ctx: NormalizeContext,
    figures: Option<Arc<FigureStore>>,
}

impl std::fmt::Debug for Registry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Registry")
            .field("functions", &self.names())
            .finish_non_exhaustive()
    }
}

impl Registry {
    pub fn new(gazetteer: Arc<Gazetteer>, coverage: CoverageTable) -> Self {
        Registry {
            functions: Vec::new(),
            ctx: NormalizeContext { gazetteer, coverage },
            figures: None,
        }
    }

    /// Store used for comparison overlays.
    pub fn with_figures(mut self, figures: Arc<FigureStore>) -> Self {
        self.figures = Some(figures);
        self
    }

    pub fn register(&mut self, mut fd: FunctionDescriptor) -> Result<(), DispatchError> {
        if self.get(&fd.name).is_some() {
            return Err(DispatchError::DuplicateName { name: fd.name });
        }
        // Required parameters are listed first; order is otherwise kept.
        fd.params.sort_by_key(|p| !p.required);
        self.functions.push(fd);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&FunctionDescriptor> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn list(&self) -> &[FunctionDescriptor] {
        &self.functions
    }

    pub fn names(&self) -> Vec<&str> {
        self.functions.iter().map(|f| f.name.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn gazetteer(&self) -> &Gazetteer {
        &self.ctx.gazetteer
    }

    /// Checks `call` against its descriptor; every violation is reported.
    pub fn validate(&self, call: &FunctionCall) -> Result<Args, DispatchError> {
        let fd = self.get(&call.name).ok_or_else(|| DispatchError::UnknownFunction {
            name: call.name.clone(),
        })?;
        let fail = |violations| DispatchError::ArgValidation {
            function: fd.name.clone(),
            violations,
        };
        let empty = Map::new();
        let given = match &call.arguments {
            Value::Object(m) => m,
            Value::Null => &empty,
            other => {
                return Err(fail(vec![violation(
                    "arguments",
                    format!("must be a JSON object, got {}", describe(other)),
                )]))
            }
        };
        let mut violations = Vec::new();
        for key in given.keys() {
            if !fd.params.iter().any(|p| &p.name == key) {
                violations.push(violation(key, "unknown parameter"));
            }
        }
        let mut args = Args {
            function: fd.name.clone(),
            values: BTreeMap::new(),
            labels: BTreeMap::new(),
            notes: Vec::new(),
            time: None,
        };
        for spec in &fd.params {
            let value = match given.get(&spec.name) {
                Some(Value::Null) | None => match (&spec.default, spec.required) {
                    (_, true) => {
                        violations.push(violation(&spec.name, "required parameter is missing"));
                        continue;
                    }
                    (Some(d), false) => d.clone(),
                    (None, false) => continue,
                },
                Some(v) => v.clone(),
            };
            match self.ctx.normalize(spec, &value) {
                Ok((v, label, note)) => {
                    args.values.insert(spec.name.clone(), v);
                    if let Some(l) = label {
                        args.labels.insert(spec.name.clone(), l);
                    }
                    args.notes.extend(note);
                }
                Err(problem) => violations.push(violation(&spec.name, problem)),
            }
        }
        if !violations.is_empty() {
            return Err(fail(violations));
        }
        self.check_cross(fd, &mut args).map_err(|v| fail(vec![v]))?;
        Ok(args)
    }

    fn check_cross(&self, fd: &FunctionDescriptor, args: &mut Args) -> Result<(), ArgViolation> {
        if let (Some(station), Some(datum)) = (args.values.get("station"), args.values.get("datum")) {
            let datum: Datum = datum.as_str().unwrap_or_default().parse().unwrap_or_default();
            if let Some(s) = station.as_str().and_then(|id| self.ctx.gazetteer.station(id)) {
                if !s.supported_datums.contains(&datum) {
                    return Err(violation("datum", format!("station {} does not publish {}", s.id, datum.code())));
                }
            }
        }
        let (Some(begin), Some(end)) = (args.values.get("begin"), args.values.get("end")) else {
            return Ok(());
        };
        let parse = |v: &Value| parse_instant(v.as_str().unwrap_or_default()).unwrap_or_default();
        let (start, end) = (parse(begin), parse(end));
        if start >= end {
            return Err(violation("end", "must be later than begin"));
        }
        let variable = fd.variable.unwrap_or(Variable::WaterLevel);
        let resolution = match (variable, args.values.get("interval").and_then(Value::as_str)) {
            (Variable::WaterLevel, Some("6min")) => Resolution::SixMinute,
            (v, _) => v.default_resolution(),
        };
        let limit = match resolution {
            Resolution::SixMinute => MAX_SPAN_SIX_MINUTE_DAYS,
            Resolution::Monthly => MAX_SPAN_MONTHLY_DAYS,
            _ => MAX_SPAN_HOURLY_DAYS,
        };
        if (end - start).num_days() > limit {
            return Err(violation(
                "end",
                format!("range longer than {limit} days at {} resolution", resolution.label()),
            ));
        }
        let tr = TimeRange { start, end, resolution };
        if fd.variable.is_some() {
            match validate_time_range(tr, variable, &self.ctx.coverage) {
                Ok(checked) => {
                    args.notes.extend(checked.clamp_note);
                    args.time = Some(checked.range);
                }
                Err(ModelError::OutOfCoverage { coverage, dataset, .. }) => {
                    return Err(violation("begin", format!("range lies outside {dataset} coverage {coverage}")))
                }
                Err(e) => return Err(violation("begin", e.to_string())),
            }
        } else {
            args.time = Some(tr);
        }
        Ok(())
    }

    /// Validates, invokes the handler, and converts panics into structured errors.
    pub fn dispatch(&self, call: &FunctionCall) -> Result<ToolResponse, DispatchError> {
        self.dispatch_with(call, CallOptions::default())
    }

    pub fn dispatch_with(&self, call: &FunctionCall, opts: CallOptions) -> Result<ToolResponse, DispatchError> {
        let args = self.validate(call)?;
        let fd = self.get(&call.name).expect("validated above");
        let handler = fd.handler.clone();
        let mut resp = catch_unwind(AssertUnwindSafe(|| handler(&args, opts))).unwrap_or_else(|panic| {
            let message = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "handler panicked".into());
            Err(DispatchError::Internal {
                function: fd.name.clone(),
                message,
            })
        })?;
        resp.others.function = fd.name.clone();
        resp.others.arguments = args.values.clone();
        let problems = resp.violations();
        if !problems.is_empty() {
            return Err(DispatchError::Internal {
                function: fd.name.clone(),
                message: format!("handler produced an invalid payload: {}", problems.join("; ")),
            });
        }
        Ok(resp)
    }

    /// Lowers a structured query to one call per selector.
    pub fn lower(&self, q: &StructuredQuery) -> Result<Vec<(String, FunctionCall)>, DispatchError> {
        q.validate().map_err(DispatchError::InvalidQuery)?;
        let begin = q.time.start.format("%Y-%m-%dT%H:%M:%SZ").to_string();
        let end = q.time.end.format("%Y-%m-%dT%H:%M:%SZ").to_string();
        let datum = q.datum.unwrap_or_default().code();
        q.selectors
            .iter()
            .enumerate()
            .map(|(i, sel)| {
                let label = q.location(i);
                let call = match (q.variable, sel) {
                    (Variable::WaterLevel, SpatialSelector::Station(id)) => FunctionCall::new(
                        "get_water_level",
                        json!({
                            "station": id, "begin": begin, "end": end, "datum": datum,
                            "interval": if q.time.resolution == Resolution::SixMinute { "6min" } else { "hourly" },
                        }),
                    ),
                    (Variable::MonthlyMeanSeaLevel, SpatialSelector::Station(id)) => FunctionCall::new(
                        "get_monthly_mean_sea_level",
                        json!({"station": id, "begin": begin, "end": end, "datum": datum}),
                    ),
                    (Variable::CoraZeta, SpatialSelector::Point(p)) => {
                        let named = self.ctx.gazetteer.lookup(&label).is_some_and(|place| match place {
                            Place::Station(s) => s.lat == p.lat && s.lon == p.lon,
                            Place::Region(r) => r.lat == p.lat && r.lon == p.lon,
                        });
                        let location = if named { json!(label) } else { json!([p.lat, p.lon]) };
                        FunctionCall::new("get_cora_series", json!({"location": location, "begin": begin, "end": end}))
                    }
                    (Variable::SeaSurfaceTemperature, SpatialSelector::Region(key)) => FunctionCall::new(
                        "get_sst",
                        json!({"region": key, "date": q.time.end.format("%Y-%m-%d").to_string()}),
                    ),
                    (Variable::SeaSurfaceTemperature, SpatialSelector::BBox(b)) => FunctionCall::new(
                        "get_sst",
                        json!({"region": [b.lat_min, b.lat_max, b.lon_min, b.lon_max], "date": q.time.end.format("%Y-%m-%d").to_string()}),
                    ),
                    (v, s) => {
                        return Err(DispatchError::InvalidQuery(format!("{v:?} cannot be served for selector {s:?}")))
                    }
                };
                Ok((label, call))
            })
            .collect()
    }

    /// Runs the calls for `q` (two, concurrently, for Compare) and merges results in selector order.
    pub fn dispatch_structured(&self, q: &StructuredQuery) -> Result<ToolResponse, DispatchError> {
        let calls = self.lower(q)?;
        if q.stat != Stat::Compare {
            let (_, call) = &calls[0];
            return self.dispatch(call);
        }
        let no_figs = CallOptions { render_figures: false };
        let results: Vec<Result<ToolResponse, DispatchError>> = std::thread::scope(|scope| {
            let handles: Vec<_> = calls
                .iter()
                .map(|(_, call)| scope.spawn(move || self.dispatch_with(call, no_figs)))
                .collect();
            handles
                .into_iter()
                .map(|h| {
                    h.join().unwrap_or_else(|_| {
                        Err(DispatchError::Internal {
                            function: "compare".into(),
                            message: "sub-call thread panicked".into(),
                        })
                    })
                })
                .collect()
        });
        self.merge_compare(q, &calls, results)
    }

    fn merge_compare(
        &self,
        q: &StructuredQuery,
        calls: &[(String, FunctionCall)],
        results: Vec<Result<ToolResponse, DispatchError>>,
    ) -> Result<ToolResponse, DispatchError> {
        let function = calls[0].1.name.clone();
        let mut data = Map::new();
        let mut arguments = BTreeMap::new();
        let mut provenance = Vec::new();
        let mut errors = Vec::new();
        let mut texts = Vec::new();
        let mut ok: Vec<(String, ToolResponse)> = Vec::new();
        for ((label, call), result) in calls.iter().zip(results) {
            arguments.insert(label.clone(), call.arguments.clone());
            match result {
                Ok(resp) => {
                    data.insert(label.clone(), resp.json_data.clone());
                    arguments.insert(label.clone(), json!(resp.others.arguments));
                    provenance.extend(resp.others.provenance.clone());
                    texts.push(resp.text.clone());
                    ok.push((label.clone(), resp));
                }
                Err(e) => {
                    texts.push(format!("{label}: no result ({}: {e}).", e.kind()));
                    errors.push(SubCallError {
                        location: label.clone(),
                        error: e.kind().to_string(),
                        message: e.to_string(),
                    });
                    if ok.is_empty() && errors.len() == calls.len() {
                        return Err(e);
                    }
                }
            }
        }
        if ok.is_empty() {
            return Err(DispatchError::UpstreamFailure {
                function,
                kind: "AllLocationsFailed".into(),
                message: errors.iter().map(|e| format!("{}: {}", e.location, e.message)).collect::<Vec<_>>().join("; "),
                retryable: false,
            });
        }
        let units: Vec<Option<Unit>> = ok.iter().map(|(_, r)| r.others.unit).collect();
        let datums: Vec<Option<Datum>> = ok
            .iter()
            .map(|(_, r)| r.others.provenance.first().and_then(|p| p.datum))
            .collect();
        if units.windows(2).any(|w| w[0] != w[1]) || datums.windows(2).any(|w| w[0] != w[1]) {
            return Err(DispatchError::Analysis {
                function,
                message: "cannot compare results with different units or datums".into(),
            });
        }

        let mut images = Vec::new();
        let fig = self.compare_figure(q, &ok);
        if let Some(fig) = fig {
            images.push(fig);
        }
        let text = format!(
            "Comparison of {} for {}. {}",
            q.variable.label(),
            calls.iter().map(|(l, _)| l.as_str()).collect::<Vec<_>>().join(" and "),
            texts.join(" ")
        );
        Ok(ToolResponse {
            text,
            images,
            json_data: Value::Object(data),
            others: ResponseMeta {
                function,
                arguments,
                unit: units[0],
                time_span: Some(q.time),
                provenance,
                errors,
            },
        })
    }

    fn compare_figure(&self, q: &StructuredQuery, ok: &[(String, ToolResponse)]) -> Option<FigureRef> {
        let figures = self.figures.as_ref()?;
        let parsed: Vec<(String, Series, SummaryStats)> = ok
            .iter()
            .filter_map(|(label, r)| {
                let series: Series = serde_json::from_value(r.json_data.get("series")?.clone()).ok()?;
                let stats = summary_stats(&series).ok()?;
                Some((label.clone(), series, stats))
            })
            .collect();
        if parsed.is_empty() {
            return None;
        }
        let traces: Vec<Trace<'_>> = parsed
            .iter()
            .map(|(l, s, st)| Trace {
                label: l,
                series: s,
                stats: st,
            })
            .collect();
        let datum = parsed[0].1.datum.map(|d| format!(", {}", d.code())).unwrap_or_default();
        let title = format!(
            "{} {}{}, {} to {}",
            parsed.iter().map(|p| p.0.as_str()).collect::<Vec<_>>().join(" vs "),
            q.variable.label(),
            datum,
            q.time.start.format("%Y-%m-%d"),
            q.time.end.format("%Y-%m-%d")
        );
        let y_label = format!("{} ({}{datum})", q.variable.label(), parsed[0].1.unit.symbol());
        figures.render_timeseries(&traces, &title, &y_label).ok()
    }
}

/// One descriptor per registered function in the chat-completions `tools` shape.
pub fn emit_function_schemas(registry: &Registry) -> Vec<Value> {
    registry
        .list()
        .iter()
        .map(|fd| {
            let mut properties = Map::new();
            for p in &fd.params {
                let mut prop = match &p.semantic {
                    SemanticType::Integer { min, max } => json!({"type": "integer", "minimum": min, "maximum": max}),
                    SemanticType::Date { .. } => json!({"type": "string", "format": "date"}),
                    _ => json!({"type": "string"}),
                };
                prop["description"] = json!(p.description);
                prop["x-semantic-type"] = json!(p.semantic.name());
                if let Some(domain) = &p.enum_domain {
                    prop["enum"] = json!(domain);
                }
                if let Some(d) = &p.default {
                    prop["default"] = d.clone();
                }
                properties.insert(p.name.clone(), prop);
            }
            let required: Vec<&str> = fd.params.iter().filter(|p| p.required).map(|p| p.name.as_str()).collect();
            json!({
                "type": "function",
                "function": {
                    "name": fd.name,
                    "description": fd.summary,
                    "parameters": {
                        "type": "object",
                        "properties": properties,
                        "required": required,
                        "additionalProperties": false,
                    }
                }
            })
        })
        .collect()
}

/// Everything the default handlers need.
pub struct Services {
    pub clients: NoaaClients,
    pub gazetteer: Arc<Gazetteer>,
    pub figures: Arc<FigureStore>,
    pub docs: Arc<DocStore>,
}

fn stats_json(s: &SummaryStats) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("max".into(), json!(s.max));
    m.insert("min".into(), json!(s.min));
    m.insert("mean".into(), json!(s.mean));
    m.insert("std".into(), json!(s.std));
    m.insert("std_kind".into(), json!("population"));
    m.insert("count".into(), json!(s.count));
    m.insert("argmax_time".into(), json!(s.argmax_time));
    m.insert("argmin_time".into(), json!(s.argmin_time));
    m
}

fn stamp(t: DateTime<Utc>) -> String {
    t.format("%Y-%m-%d %H:%M UTC").to_string()
}

fn span_text(tr: &TimeRange) -> String {
    format!("{} to {}", tr.start.format("%Y-%m-%d"), tr.end.format("%Y-%m-%d"))
}

fn stats_sentence(s: &SummaryStats, unit: &str) -> String {
    format!(
        "maximum {} {unit} at {}, minimum {} {unit} at {}, mean {} {unit}, standard deviation {} {unit} (population, {} values)",
        fixed2(s.max),
        stamp(s.argmax_time),
        fixed2(s.min),
        stamp(s.argmin_time),
        fixed2(s.mean),
        fixed2(s.std),
        s.count
    )
}

fn with_notes(mut p: Provenance, args: &Args, extra: &[String]) -> Provenance {
    let mut steps = args.notes.clone();
    steps.append(&mut p.processing_steps);
    steps.extend(extra.iter().cloned());
    p.processing_steps = steps;
    p
}

fn series_figure(
    svc: &Services,
    opts: CallOptions,
    function: &str,
    label: &str,
    series: &Series,
    stats: &SummaryStats,
    title: &str,
) -> Result<Vec<FigureRef>, DispatchError> {
    if !opts.render_figures {
        return Ok(Vec::new());
    }
    let datum = series.datum.map(|d| format!(", {}", d.code())).unwrap_or_default();
    let y_label = format!("{} ({}{datum})", series.variable.label(), series.unit.symbol());
    svc.figures
        .render_timeseries(&[Trace { label, series, stats }], title, &y_label)
        .map(|f| vec![f])
        .map_err(|e| DispatchError::render(function, e))
}

fn water_level_handler(svc: Arc<Services>) -> Handler {
    Arc::new(move |args: &Args, opts| {
        let f = "get_water_level";
        let interval = if args.str("interval") == "6min" { Interval::SixMinute } else { Interval::Hourly };
        let tr = args.time.expect("begin/end validated");
        let datum = args.datum();
        let fetched = svc
            .clients
            .fetch_water_level(args.str("station"), &tr, datum, interval)
            .map_err(|e| DispatchError::upstream(f, e))?;
        let series = &fetched.data.series;
        let stats = summary_stats(series).map_err(|e| DispatchError::analysis(f, e))?;
        let st = &fetched.data.station;
        let label = args.label("station");
        let name = if st.name.is_empty() { label.clone() } else { st.name.clone() };
        let mut data = Map::new();
        data.insert("location".into(), json!(label));
        data.insert("station".into(), json!({"id": st.id, "name": name, "lat": st.lat, "lon": st.lon}));
        data.insert("variable".into(), json!(Variable::WaterLevel));
        data.insert("unit".into(), json!(Unit::Meters.code()));
        data.insert("datum".into(), json!(datum.code()));
        data.insert("interval".into(), json!(interval.code()));
        data.extend(stats_json(&stats));
        data.insert("missing".into(), json!(series.len() - series.valid_count()));
        data.insert("series".into(), json!(series));
        let provenance = with_notes(
            fetched.provenance,
            args,
            &["summary statistics over unmasked values; population standard deviation".to_string()],
        );
        let interval_word = if interval == Interval::Hourly { "Hourly" } else { "Six-minute" };
        let text = format!(
            "{interval_word} water level at {name} (station {}) from {} UTC relative to {}: {}. Source: {} ({}).",
            st.id,
            span_text(&tr),
            datum.code(),
            stats_sentence(&stats, "m"),
            provenance.source_name,
            provenance.dataset_id
        );
        let title = format!(
            "{name} ({}) {} water level, {}, {}",
            st.id,
            interval.code(),
            datum.code(),
            span_text(&tr)
        );
        let images = series_figure(&svc, opts, f, &label, series, &stats, &title)?;
        Ok(ToolResponse {
            text,
            images,
            json_data: Value::Object(data),
            others: ResponseMeta {
                function: f.into(),
                arguments: BTreeMap::new(),
                unit: Some(Unit::Meters),
                time_span: Some(tr),
                provenance: vec![provenance],
                errors: Vec::new(),
            },
        })
    })
}

fn monthly_handler(svc: Arc<Services>) -> Handler {
    Arc::new(move |args: &Args, opts| {
        let f = "get_monthly_mean_sea_level";
        let tr = args.time.expect("begin/end validated");
        let datum = args.datum();
        let station = args.str("station");
        let label = args.label("station");
        let fetched = svc
            .clients
            .fetch_monthly_mean(station, &tr, datum)
            .map_err(|e| DispatchError::upstream(f, e))?;
        let series = &fetched.data;
        let stats = summary_stats(series).map_err(|e| DispatchError::analysis(f, e))?;
        let mut data = Map::new();
        data.insert("location".into(), json!(label));
        data.insert("station".into(), json!({"id": station, "name": label}));
        data.insert("variable".into(), json!(Variable::MonthlyMeanSeaLevel));
        data.insert("unit".into(), json!(Unit::Meters.code()));
        data.insert("datum".into(), json!(datum.code()));
        data.insert("months".into(), json!(series.len()));
        data.extend(stats_json(&stats));
        data.insert("missing".into(), json!(series.len() - series.valid_count()));
        let mut extra = vec!["summary statistics over available months; population standard deviation".to_string()];
        let trend_text = match linear_trend(series) {
            Ok(t) => {
                data.insert(
                    "trend".into(),
                    json!({
                        "slope_m_per_year": t.slope,
                        "slope_mm_per_year": t.slope * 1000.0,
                        "intercept_m": t.intercept,
                        "r_squared": t.r_squared,
                        "n": t.n,
                        "method": "ordinary least squares of monthly means against years since the first month",
                    }),
                );
                extra.push(format!(
                    "change rate by ordinary least squares over {} monthly means (years of 365.2425 days since the first month)",
                    t.n
                ));
                format!(
                    " Least-squares change rate {} mm/yr (r² {}, {} months).",
                    fixed2(t.slope * 1000.0),
                    fixed2(t.r_squared),
                    t.n
                )
            }
            Err(e) => {
                data.insert("trend".into(), Value::Null);
                extra.push(format!("no change rate: {e}"));
                String::new()
            }
        };
        data.insert("series".into(), json!(series));
        let provenance = with_notes(fetched.provenance, args, &extra);
        let text = format!(
            "Monthly mean sea level at {label} (station {station}) from {} relative to {}: {}.{trend_text} Source: {} ({}).",
            span_text(&tr),
            datum.code(),
            stats_sentence(&stats, "m"),
            provenance.source_name,
            provenance.dataset_id
        );
        let title = format!("{label} ({station}) monthly mean sea level, {}, {}", datum.code(), span_text(&tr));
        let images = series_figure(&svc, opts, f, &label, series, &stats, &title)?;
        Ok(ToolResponse {
            text,
            images,
            json_data: Value::Object(data),
            others: ResponseMeta {
                function: f.into(),
                arguments: BTreeMap::new(),
                unit: Some(Unit::Meters),
                time_span: Some(tr),
                provenance: vec![provenance],
                errors: Vec::new(),
            },
        })
    })
}

fn cora_handler(svc: Arc<Services>) -> Handler {
    Arc::new(move |args: &Args, opts| {
        let f = "get_cora_series";
        let tr = args.time.expect("begin/end validated");
        let label = args.label("location");
        let point = args.point("location");
        let fetched = svc
            .clients
            .fetch_cora_series(&label, point, &tr)
            .map_err(|e| DispatchError::upstream(f, e))?;
        let c = &fetched.data;
        let stats = summary_stats(&c.series).map_err(|e| DispatchError::analysis(f, e))?;
        let mut data = Map::new();
        data.insert("location".into(), json!(label));
        data.insert("query_point".into(), json!({"lat": point.lat, "lon": point.lon}));
        data.insert(
            "node".into(),
            json!({"id": c.node.index, "lat": c.node.lat, "lon": c.node.lon, "distance_km": c.node.distance_km}),
        );
        data.insert("variable".into(), json!(Variable::CoraZeta));
        data.insert("unit".into(), json!(Unit::Meters.code()));
        data.insert("datum".into(), json!(Datum::Msl.code()));
        data.extend(stats_json(&stats));
        data.insert("missing".into(), json!(c.series.len() - c.series.valid_count()));
        data.insert("series".into(), json!(c.series));
        let provenance = with_notes(
            fetched.provenance,
            args,
            &["summary statistics over unmasked values; population standard deviation".to_string()],
        );
        let text = format!(
            "Modeled hourly water level (zeta) near {label} from {} UTC at mesh node {} ({}, {}), {} km from the requested point: {}. Source: {} ({}).",
            span_text(&tr),
            c.node.index,
            fixed2(c.node.lat),
            fixed2(c.node.lon),
            fixed2(c.node.distance_km),
            stats_sentence(&stats, "m"),
            provenance.source_name,
            provenance.dataset_id
        );
        let title = format!("{label} CORA zeta, node {}, {}", c.node.index, span_text(&tr));
        let images = series_figure(&svc, opts, f, &label, &c.series, &stats, &title)?;
        Ok(ToolResponse {
            text,
            images,
            json_data: Value::Object(data),
            others: ResponseMeta {
                function: f.into(),
                arguments: BTreeMap::new(),
                unit: Some(Unit::Meters),
                time_span: Some(tr),
                provenance: vec![provenance],
                errors: Vec::new(),
            },
        })
    })
}

fn sst_handler(svc: Arc<Services>) -> Handler {
    Arc::new(move |args: &Args, opts| {
        let f = "get_sst";
        let bbox = args.bbox("region");
        let label = args.label("region");
        let date = args.day("date");
        let fetched = svc
            .clients
            .fetch_sst(&bbox, &label, date)
            .map_err(|e| DispatchError::upstream(f, e))?;
        let g = &fetched.data;
        let mut data = Map::new();
        data.insert("region".into(), json!(label));
        data.insert("region_key".into(), args.values["region"]["key"].clone());
        data.insert("date".into(), json!(date.format("%Y-%m-%d").to_string()));
        data.insert("variable".into(), json!(Variable::SeaSurfaceTemperature));
        data.insert("unit".into(), json!(Unit::Celsius.code()));
        data.insert(
            "bbox".into(),
            json!({"lat_min": bbox.lat_min, "lat_max": bbox.lat_max, "lon_min": bbox.lon_min, "lon_max": bbox.lon_max}),
        );
        data.insert("grid_shape".into(), json!([g.lats.len(), g.lons.len()]));
        let mut extra = Vec::new();
        let (text, images) = match grid_summary(g) {
            Ok(s) => {
                data.insert("min".into(), json!(s.min));
                data.insert("max".into(), json!(s.max));
                data.insert("mean".into(), json!(s.mean));
                data.insert("std".into(), json!(s.std));
                data.insert("std_kind".into(), json!("population"));
                data.insert("count".into(), json!(s.count));
                data.insert("masked".into(), json!(s.masked));
                data.insert("argmin".into(), json!({"lat": s.argmin.lat, "lon": s.argmin.lon}));
                data.insert("argmax".into(), json!({"lat": s.argmax.lat, "lon": s.argmax.lon}));
                let th = threshold_mask(g, CYCLONE_SST_THRESHOLD_C).map_err(|e| DispatchError::analysis(f, e))?;
                data.insert(
                    "threshold".into(),
                    json!({
                        "value": th.threshold,
                        "exceed_count": th.exceed_count,
                        "unmasked_count": th.unmasked_count,
                        "exceed_fraction": th.exceed_fraction,
                    }),
                );
                extra.push("statistics over unmasked cells only; population standard deviation".to_string());
                extra.push(format!(
                    "counted cells at or above {CYCLONE_SST_THRESHOLD_C} degC over unmasked cells"
                ));
                let text = format!(
                    "Sea surface temperature over {label} on {date}: minimum {} °C at ({}, {}), maximum {} °C at ({}, {}), mean {} °C over {} ocean cells ({} masked). {} % of ocean cells were at or above {} °C.",
                    fixed2(s.min),
                    fixed2(s.argmin.lat),
                    fixed2(s.argmin.lon),
                    fixed2(s.max),
                    fixed2(s.argmax.lat),
                    fixed2(s.argmax.lon),
                    fixed2(s.mean),
                    s.count,
                    s.masked,
                    fixed2(th.exceed_fraction * 100.0),
                    fixed2(CYCLONE_SST_THRESHOLD_C)
                );
                data.insert("threshold_percent".into(), json!(th.exceed_fraction * 100.0));
                let images = if opts.render_figures {
                    let title = format!("{label} sea surface temperature, {date}");
                    vec![svc
                        .figures
                        .render_map(g, Colormap::Thermal, &title)
                        .map_err(|e| DispatchError::render(f, e))?]
                } else {
                    Vec::new()
                };
                (text, images)
            }
            Err(AnalysisError::FullyMasked) => {
                data.insert("count".into(), json!(0));
                data.insert("masked".into(), json!(g.values.len()));
                extra.push("every cell masked; no statistics computed".to_string());
                (
                    format!("Sea surface temperature over {label} on {date}: every cell is land or missing, so no statistics are available."),
                    Vec::new(),
                )
            }
            Err(e) => return Err(DispatchError::analysis(f, e)),
        };
        let provenance = with_notes(fetched.provenance, args, &extra);
        let text = format!("{text} Source: {} ({}).", provenance.source_name, provenance.dataset_id);
        let time_span = provenance.time_span;
        Ok(ToolResponse {
            text,
            images,
            json_data: Value::Object(data),
            others: ResponseMeta {
                function: f.into(),
                arguments: BTreeMap::new(),
                unit: Some(Unit::Celsius),
                time_span: Some(time_span),
                provenance: vec![provenance],
                errors: Vec::new(),
            },
        })
    })
}

fn search_handler(svc: Arc<Services>) -> Handler {
    Arc::new(move |args: &Args, _opts| {
        let f = "search_documents";
        let query = args.str("query");
        let k = args.u64("k") as usize;
        let hits = match svc.docs.search(query, k) {
            Ok(h) => h,
            Err(RetrievalError::EmptyStore) => Vec::new(),
            Err(e) => {
                return Err(DispatchError::Internal {
                    function: f.into(),
                    message: e.to_string(),
                })
            }
        };
        let results: Vec<Value> = hits
            .iter()
            .map(|h| {
                json!({
                    "doc_id": h.chunk.doc_id,
                    "chunk_index": h.chunk.chunk_index,
                    "title": h.chunk.title,
                    "year": h.chunk.year,
                    "origin": h.chunk.origin,
                    "score": h.score,
                    "text": h.chunk.text,
                })
            })
            .collect();
        let (y0, y1) = svc.docs.year_span().unwrap_or((1970, 1970));
        let span = TimeRange {
            start: NaiveDate::from_ymd_opt(y0, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap().and_utc(),
            end: NaiveDate::from_ymd_opt(y1, 12, 31).unwrap().and_hms_opt(23, 59, 0).unwrap().and_utc(),
            resolution: Resolution::Daily,
        };
        let provenance = Provenance {
            source_name: "Bundled document corpus".into(),
            dataset_id: format!("corpus:{}", svc.docs.embedder().id()),
            station_or_grid: format!("{} chunks from {} documents", svc.docs.len(), svc.docs.doc_count()),
            unit: Unit::Dimensionless,
            datum: None,
            time_span: span,
            retrieved_at: span.end,
            processing_steps: vec![
                format!("embedded the query with {}", svc.docs.embedder().id()),
                format!("ranked all chunks by exact cosine similarity; kept the top {k}"),
            ],
        };
        let text = if hits.is_empty() {
            format!("No indexed passages matched \"{query}\".")
        } else {
            let titles: Vec<String> = hits
                .iter()
                .map(|h| format!("{} (chunk {}, score {})", h.chunk.title, h.chunk.chunk_index, fixed2(h.score)))
                .collect();
            format!("Top {} passages for \"{query}\": {}.", hits.len(), titles.join("; "))
        };
        Ok(ToolResponse {
            text,
            images: Vec::new(),
            json_data: json!({ "query": query, "k": k, "results": results }),
            others: ResponseMeta {
                function: f.into(),
                arguments: BTreeMap::new(),
                unit: Some(Unit::Dimensionless),
                time_span: Some(span),
                provenance: vec![provenance],
                errors: Vec::new(),
            },
        })
    })
}

fn date_param(name: &str, role: DateRole, description: &str) -> ParamSpec {
    ParamSpec::required(name, SemanticType::Date { role }, description)
}

/// The five built-in functions, in their fixed order.
pub fn default_registry(svc: Arc<Services>, coverage: CoverageTable) -> Registry {
    let mut reg = Registry::new(svc.gazetteer.clone(), coverage).with_figures(svc.figures.clone());
    let station = || ParamSpec::required("station", SemanticType::StationRef, "Tide station name (e.g. Boston) or 7-digit CO-OPS id");
    let datum = || {
        ParamSpec::optional(
            "datum",
            SemanticType::Datum,
            json!("MSL"),
            "Vertical datum for water levels; defaults to MSL",
        )
    };
    let defaults = [
        FunctionDescriptor {
            name: "get_water_level".into(),
            summary: "Observed water level at a CO-OPS tide station, with max/min/mean/std and a time-series figure.".into(),
            params: vec![
                station(),
                date_param("begin", DateRole::Start, "Start date (YYYY-MM-DD or YYYY-MM-DDTHH:MMZ)"),
                date_param("end", DateRole::End, "End date, inclusive (YYYY-MM-DD or YYYY-MM-DDTHH:MMZ)"),
                datum(),
                ParamSpec::optional("interval", SemanticType::Interval, json!("hourly"), "Sampling interval"),
            ],
            variable: Some(Variable::WaterLevel),
            handler: water_level_handler(svc.clone()),
        },
        FunctionDescriptor {
            name: "get_monthly_mean_sea_level".into(),
            summary: "Monthly mean sea level at a CO-OPS tide station with a least-squares change rate.".into(),
            params: vec![
                station(),
                date_param("begin", DateRole::Start, "First month (YYYY-MM or YYYY-MM-DD)"),
                date_param("end", DateRole::End, "Last month, inclusive (YYYY-MM or YYYY-MM-DD)"),
                datum(),
            ],
            variable: Some(Variable::MonthlyMeanSeaLevel),
            handler: monthly_handler(svc.clone()),
        },
        FunctionDescriptor {
            name: "get_cora_series".into(),
            summary: "Hourly modeled water level (zeta) from the CORA coastal reanalysis at the nearest wet model node.".into(),
            params: vec![
                ParamSpec::required("location", SemanticType::Location, "Place name or 'lat,lon' in decimal degrees"),
                date_param("begin", DateRole::Start, "Start date (YYYY-MM-DD)"),
                date_param("end", DateRole::End, "End date, inclusive (YYYY-MM-DD)"),
            ],
            variable: Some(Variable::CoraZeta),
            handler: cora_handler(svc.clone()),
        },
        FunctionDescriptor {
            name: "get_sst".into(),
            summary: "Daily Coral Reef Watch sea surface temperature over a region: min/max/mean, warm-water fraction and a map.".into(),
            params: vec![
                ParamSpec::required(
                    "region",
                    SemanticType::Region,
                    "Named region (e.g. Gulf of Mexico) or 'lat_min,lat_max,lon_min,lon_max'",
                ),
                date_param("date", DateRole::Day, "Day (YYYY-MM-DD)"),
            ],
            variable: None,
            handler: sst_handler(svc.clone()),
        },
        FunctionDescriptor {
            name: "search_documents".into(),
            summary: "Passages from the indexed document corpus ranked by similarity to a query.".into(),
            params: vec![
                ParamSpec::required("query", SemanticType::Text, "Search text"),
                ParamSpec::optional(
                    "k",
                    SemanticType::Integer { min: 1, max: 20 },
                    json!(crate::retrieval::DEFAULT_TOP_K),
                    "Number of passages to return",
                ),
            ],
            variable: None,
            handler: search_handler(svc),
        },
    ];
    for fd in defaults {
        reg.register(fd).expect("default names are unique");
    }
    reg
}
