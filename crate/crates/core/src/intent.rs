//! Template grammar turning a question into a [`StructuredQuery`].
//!
//! Keyword sets pick the variable and statistic, the gazetteer resolves place
//! names, and a small time grammar resolves the period. Anything the grammar
//! cannot classify is reported as `UnsupportedIntent` so a model can take over.

use chrono::{DateTime, Datelike, NaiveDate, Timelike, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gazetteer::{Gazetteer, Place};
use crate::model::{BBox, DatasetFamily, Datum, GeoPoint, Resolution, SpatialSelector, TimeRange, Variable};

pub use crate::dispatch::emit_function_schemas;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("empty query")]
    EmptyQuery,
    #[error("unknown location '{0}'")]
    UnknownLocation(String),
    #[error("ambiguous time: {0}")]
    AmbiguousTime(String),
    #[error("unsupported intent: {0}")]
    UnsupportedIntent(String),
}

impl ParseError {
    pub fn kind(&self) -> &'static str {
        match self {
            ParseError::EmptyQuery => "EmptyQuery",
            ParseError::UnknownLocation(_) => "UnknownLocation",
            ParseError::AmbiguousTime(_) => "AmbiguousTime",
            ParseError::UnsupportedIntent(_) => "UnsupportedIntent",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stat {
    Max,
    Min,
    Mean,
    Std,
    FullSeries,
    Trend,
    Compare,
}

impl Stat {
    pub fn label(self) -> &'static str {
        match self {
            Stat::Max => "maximum",
            Stat::Min => "minimum",
            Stat::Mean => "mean",
            Stat::Std => "standard deviation",
            Stat::FullSeries => "full series",
            Stat::Trend => "trend",
            Stat::Compare => "comparison",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuredQuery {
    pub variable: Variable,
    pub stat: Stat,
    pub selectors: Vec<SpatialSelector>,
    /// Display name for each selector, same order.
    #[serde(default)]
    pub locations: Vec<String>,
    pub time: TimeRange,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_hint: Option<DatasetFamily>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub datum: Option<Datum>,
}

impl StructuredQuery {
    pub fn validate(&self) -> Result<(), String> {
        let want = if self.stat == Stat::Compare { 2 } else { 1 };
        if self.selectors.len() != want {
            return Err(format!(
                "stat {:?} requires exactly {want} selector(s), got {}",
                self.stat,
                self.selectors.len()
            ));
        }
        if !self.locations.is_empty() && self.locations.len() != self.selectors.len() {
            return Err("locations must name each selector".into());
        }
        if let Some(hint) = self.dataset_hint {
            if hint != self.variable.family() {
                return Err(format!("dataset hint {} does not serve {:?}", hint.key(), self.variable));
            }
        }
        for s in &self.selectors {
            s.validate().map_err(|e| e.to_string())?;
        }
        if self.time.start >= self.time.end {
            return Err("time range is empty".into());
        }
        if !self.variable.allowed_resolutions().contains(&self.time.resolution) {
            return Err(format!("{:?} cannot use {:?} resolution", self.variable, self.time.resolution));
        }
        Ok(())
    }

    pub fn location(&self, i: usize) -> String {
        self.locations.get(i).cloned().unwrap_or_else(|| match &self.selectors[i] {
            SpatialSelector::Station(id) => id.clone(),
            SpatialSelector::Region(k) => k.clone(),
            SpatialSelector::Point(p) => format!("{:.4},{:.4}", p.lat, p.lon),
            SpatialSelector::BBox(b) => format!("{},{},{},{}", b.lat_min, b.lat_max, b.lon_min, b.lon_max),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    /// Original spelling with surrounding punctuation removed.
    pub raw: String,
    /// Lowercase form used for matching.
    pub norm: String,
}

pub fn tokenize(text: &str) -> Vec<Token> {
    let folded = text.replace(['\u{2019}', '\u{2018}', '`'], "'");
    folded
        .split(|c: char| c.is_whitespace() || matches!(c, ',' | ';' | '?' | '!' | '(' | ')' | '"' | '\u{201c}' | '\u{201d}'))
        .filter_map(|w| {
            let w = w.trim_matches(|c: char| !c.is_alphanumeric());
            let w = w.strip_suffix("'s").unwrap_or(w);
            (!w.is_empty()).then(|| Token {
                raw: w.to_string(),
                norm: w.to_lowercase(),
            })
        })
        .collect()
}

const MONTHS: [&str; 12] = [
    "january", "february", "march", "april", "may", "june", "july", "august", "september", "october", "november",
    "december",
];

fn month_number(word: &str) -> Option<u32> {
    if let Some(i) = MONTHS.iter().position(|m| *m == word) {
        return Some(i as u32 + 1);
    }
    if word == "sept" {
        return Some(9);
    }
    (word.len() == 3 && word != "may")
        .then(|| MONTHS.iter().position(|m| m.starts_with(word)))
        .flatten()
        .map(|i| i as u32 + 1)
}

fn year_of(word: &str) -> Option<i32> {
    (word.len() == 4 && word.bytes().all(|b| b.is_ascii_digit()))
        .then(|| word.parse().ok())
        .flatten()
        .filter(|y| (1800..=2199).contains(y))
}

fn day_of(word: &str) -> Option<u32> {
    let digits = ["st", "nd", "rd", "th"]
        .iter()
        .find_map(|s| word.strip_suffix(s))
        .unwrap_or(word);
    (digits.len() <= 2 && !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()))
        .then(|| digits.parse().ok())
        .flatten()
        .filter(|d| (1..=31).contains(d))
}

fn month_end(year: i32, month: u32) -> Option<NaiveDate> {
    let next = if month == 12 {
        NaiveDate::from_ymd_opt(year + 1, 1, 1)?
    } else {
        NaiveDate::from_ymd_opt(year, month + 1, 1)?
    };
    next.pred_opt()
}

/// A recognized period: inclusive day bounds and the token span it occupies.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Period {
    first: NaiveDate,
    last: NaiveDate,
    from_tok: usize,
    to_tok: usize,
}

fn bad_date(text: &str) -> ParseError {
    ParseError::AmbiguousTime(format!("'{text}' is not a valid date"))
}

fn scan_period(words: &[&str], i: usize, now: DateTime<Utc>) -> Result<Option<Period>, ParseError> {
    let w = words[i];
    let next = |k: usize| words.get(i + k).copied();
    let period = |first, last, to_tok| Some(Period { first, last, from_tok: i, to_tok });

    let parts: Vec<&str> = w.split('-').collect();
    if parts.len() > 1 && parts.iter().all(|p| !p.is_empty() && p.bytes().all(|b| b.is_ascii_digit())) {
        return match parts[..] {
            [y, m, d] if y.len() == 4 => {
                let (y, m, d) = (y.parse().unwrap_or(0), m.parse().unwrap_or(0), d.parse().unwrap_or(0));
                let day = NaiveDate::from_ymd_opt(y, m, d).ok_or_else(|| bad_date(w))?;
                Ok(period(day, day, i))
            }
            [a, b] if a.len() == 4 && b.len() == 4 => {
                let (a, b) = (year_of(a).ok_or_else(|| bad_date(w))?, year_of(b).ok_or_else(|| bad_date(w))?);
                Ok(period(
                    NaiveDate::from_ymd_opt(a, 1, 1).unwrap(),
                    NaiveDate::from_ymd_opt(b, 12, 31).unwrap(),
                    i,
                ))
            }
            [y, m] if y.len() == 4 && m.len() <= 2 => {
                let (y, m) = (y.parse().unwrap_or(0), m.parse().unwrap_or(0));
                let first = NaiveDate::from_ymd_opt(y, m, 1).ok_or_else(|| bad_date(w))?;
                Ok(period(first, month_end(y, m).unwrap(), i))
            }
            _ => Ok(None),
        };
    }
    if let Some(m) = month_number(w) {
        if let (Some(d), Some(y)) = (next(1).and_then(day_of), next(2).and_then(year_of)) {
            let day = NaiveDate::from_ymd_opt(y, m, d).ok_or_else(|| bad_date(&format!("{w} {d} {y}")))?;
            return Ok(period(day, day, i + 2));
        }
        if let Some(y) = next(1).and_then(year_of) {
            return Ok(period(NaiveDate::from_ymd_opt(y, m, 1).unwrap(), month_end(y, m).unwrap(), i + 1));
        }
        if w != "may" && w.len() > 3 {
            return Err(ParseError::AmbiguousTime(format!("'{w}' needs a year")));
        }
        return Ok(None);
    }
    if let Some(d) = day_of(w) {
        if let (Some(m), Some(y)) = (next(1).and_then(month_number), next(2).and_then(year_of)) {
            let day = NaiveDate::from_ymd_opt(y, m, d).ok_or_else(|| bad_date(&format!("{d} {w} {y}")))?;
            return Ok(period(day, day, i + 2));
        }
    }
    if let Some(y) = year_of(w) {
        return Ok(period(
            NaiveDate::from_ymd_opt(y, 1, 1).unwrap(),
            NaiveDate::from_ymd_opt(y, 12, 31).unwrap(),
            i,
        ));
    }
    if next(1) == Some("year") && matches!(w, "last" | "this") {
        let y = if w == "last" { now.year() - 1 } else { now.year() };
        let last = if w == "last" {
            NaiveDate::from_ymd_opt(y, 12, 31).unwrap()
        } else {
            now.date_naive()
        };
        return Ok(period(NaiveDate::from_ymd_opt(y, 1, 1).unwrap(), last, i + 1));
    }
    Ok(None)
}

const VAGUE_TIME: [&str; 17] = [
    "last", "past", "recent", "recently", "lately", "yesterday", "today", "tomorrow", "ago", "winter", "summer",
    "spring", "autumn", "season", "decade", "week", "current",
];

fn day_start(d: NaiveDate) -> DateTime<Utc> {
    d.and_hms_opt(0, 0, 0).unwrap().and_utc()
}

fn day_end(d: NaiveDate) -> DateTime<Utc> {
    d.and_hms_opt(23, 59, 0).unwrap().and_utc()
}

/// Finds the period named in `tokens` (lowercase words). The returned range has
/// `Daily` resolution; callers pick the resolution for their variable.
pub fn resolve_time_expression(tokens: &[&str], now: DateTime<Utc>) -> Result<TimeRange, ParseError> {
    let mut periods = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        match scan_period(tokens, i, now)? {
            Some(p) => {
                i = p.to_tok + 1;
                periods.push(p);
            }
            None => i += 1,
        }
    }
    let used = |k: usize| periods.iter().any(|p| (p.from_tok..=p.to_tok).contains(&k));
    if let Some((_, w)) = tokens
        .iter()
        .enumerate()
        .find(|(k, w)| !used(*k) && VAGUE_TIME.contains(w))
    {
        return Err(ParseError::AmbiguousTime(format!("cannot pin down '{w}' to dates")));
    }
    let (first, last) = match periods[..] {
        [] => return Err(ParseError::AmbiguousTime("no time period given".into())),
        [p] => {
            if p.from_tok > 0 && tokens[p.from_tok - 1] == "since" {
                let now_min = now.with_second(0).unwrap().with_nanosecond(0).unwrap();
                let start = day_start(p.first);
                if start >= now_min {
                    return Err(ParseError::AmbiguousTime("'since' a date that has not happened".into()));
                }
                return TimeRange::new(start, now_min, Resolution::Daily)
                    .map_err(|e| ParseError::AmbiguousTime(e.to_string()));
            }
            (p.first, p.last)
        }
        [a, b] => {
            let between = &tokens[a.to_tok + 1..b.from_tok];
            let joined = matches!(between, ["to"] | ["through"] | ["thru"] | ["until"] | ["till"] | ["-"])
                || (between == ["and"] && a.from_tok > 0 && tokens[a.from_tok - 1] == "between");
            if !joined {
                return Err(ParseError::AmbiguousTime("more than one time period given".into()));
            }
            if b.last < a.first {
                return Err(ParseError::AmbiguousTime("time range ends before it starts".into()));
            }
            (a.first, b.last)
        }
        _ => return Err(ParseError::AmbiguousTime("more than two time periods given".into())),
    };
    TimeRange::new(day_start(first), day_end(last), Resolution::Daily)
        .map_err(|e| ParseError::AmbiguousTime(e.to_string()))
}

fn has_phrase(text: &str, phrases: &[&str]) -> bool {
    phrases.iter().any(|p| text.contains(&format!(" {p} ")))
}

/// Words that start with a capital letter but never name a place.
const NOT_PLACES: [&str; 14] = [
    "CORA", "SST", "NOAA", "CRW", "CO-OPS", "UTC", "GMT", "I", "What", "Show", "How", "The", "Compare", "Plot",
];

const PLACE_PREPOSITIONS: [&str; 10] = ["in", "at", "near", "off", "for", "and", "vs", "versus", "between", "from"];

struct Located {
    places: Vec<(String, Place)>,
    consumed: Vec<bool>,
}

fn find_places(tokens: &[Token], gz: &Gazetteer) -> Located {
    let mut places: Vec<(String, Place)> = Vec::new();
    let mut consumed = vec![false; tokens.len()];
    let mut i = 0;
    while i < tokens.len() {
        let mut hit = None;
        for n in (1..=gz.max_words().max(1).min(tokens.len() - i)).rev() {
            let phrase: Vec<&str> = tokens[i..i + n].iter().map(|t| t.norm.as_str()).collect();
            // Single generic words ("the", "key") never name a place on their own.
            if n == 1 && phrase[0].len() < 3 {
                continue;
            }
            if let Some(place) = gz.lookup(&phrase.join(" ")) {
                hit = Some((n, place));
                break;
            }
        }
        match hit {
            Some((n, place)) => {
                consumed[i..i + n].iter_mut().for_each(|c| *c = true);
                let label = place.name().to_string();
                if !places.iter().any(|(_, p)| p == &place) {
                    places.push((label, place));
                }
                i += n;
            }
            None => i += 1,
        }
    }
    Located { places, consumed }
}

/// A capitalized run after a place preposition that the gazetteer did not consume.
fn unknown_place(tokens: &[Token], consumed: &[bool]) -> Option<String> {
    let is_candidate = |t: &Token| {
        t.raw.chars().next().is_some_and(char::is_uppercase)
            && !NOT_PLACES.contains(&t.raw.as_str())
            && month_number(&t.norm).is_none()
            && t.norm.parse::<Datum>().is_err()
            && !t.raw.chars().any(|c| c.is_ascii_digit())
    };
    for (i, t) in tokens.iter().enumerate() {
        if consumed[i] || !PLACE_PREPOSITIONS.contains(&t.norm.as_str()) {
            continue;
        }
        let mut j = i + 1;
        if tokens.get(j).is_some_and(|t| t.norm == "the") {
            j += 1;
        }
        let run: Vec<&str> = tokens[j.min(tokens.len())..]
            .iter()
            .zip(&consumed[j.min(tokens.len())..])
            .take_while(|(t, c)| !**c && (is_candidate(t) || (t.norm == "of" || t.norm == "de")))
            .map(|(t, _)| t.raw.as_str())
            .collect();
        let run: Vec<&str> = run
            .iter()
            .rev()
            .skip_while(|w| w.chars().next().is_some_and(char::is_lowercase))
            .collect::<Vec<_>>()
            .into_iter()
            .rev()
            .copied()
            .collect();
        if !run.is_empty() {
            return Some(run.join(" "));
        }
    }
    None
}

fn detect_variable(text: &str) -> Option<(Variable, bool)> {
    if has_phrase(text, &["sst", "sea surface temperature", "water temperature", "ocean temperature", "temperature", "temperatures"]) {
        return Some((Variable::SeaSurfaceTemperature, false));
    }
    if has_phrase(text, &["cora", "reanalysis", "hindcast"]) {
        return Some((Variable::CoraZeta, false));
    }
    if has_phrase(text, &["monthly mean", "monthly means", "mean sea level", "msl trend"]) {
        return Some((Variable::MonthlyMeanSeaLevel, false));
    }
    if has_phrase(text, &["water level", "water levels", "tide", "tides", "tidal", "tide gauge"]) {
        return Some((Variable::WaterLevel, false));
    }
    if has_phrase(text, &["sea level", "sea levels", "ssh", "sea surface height"]) {
        // Resolved to monthly or hourly once the period is known.
        return Some((Variable::WaterLevel, true));
    }
    None
}

fn detect_stat(text: &str) -> Option<Stat> {
    // Drop dataset names that contain stat words.
    let text = text
        .replace(" mean sea level ", " msl ")
        .replace(" monthly means ", " monthly ")
        .replace(" monthly mean ", " monthly ");
    let table: [(Stat, &[&str]); 5] = [
        (Stat::Trend, &["trend", "trends", "change rate", "change rates", "rate of change", "rate of rise", "rising", "how fast"]),
        (Stat::Max, &["maximum", "max", "highest", "peak", "largest", "warmest", "hottest"]),
        (Stat::Min, &["minimum", "min", "lowest", "smallest", "coldest", "coolest"]),
        (Stat::Mean, &["mean", "average", "avg", "typical"]),
        (Stat::Std, &["standard deviation", "std", "variability", "stddev"]),
    ];
    table
        .iter()
        .filter_map(|(stat, words)| {
            words
                .iter()
                .filter_map(|w| text.find(&format!(" {w} ")))
                .min()
                .map(|pos| (pos, *stat))
        })
        .min_by_key(|(pos, _)| *pos)
        .map(|(_, s)| s)
}

fn months_spanned(tr: &TimeRange) -> i32 {
    (tr.end.year() - tr.start.year()) * 12 + tr.end.month() as i32 - tr.start.month() as i32 + 1
}

fn bbox_around(lat: f64, lon: f64, half: f64) -> BBox {
    BBox {
        lat_min: (lat - half).max(-90.0),
        lat_max: (lat + half).min(90.0),
        lon_min: (lon - half).max(-180.0),
        lon_max: (lon + half).min(180.0),
    }
}

/// Parses one question. Pure for fixed `(text, gz, now)`.
pub fn parse_query(text: &str, gz: &Gazetteer, now: DateTime<Utc>) -> Result<StructuredQuery, ParseError> {
    let tokens = tokenize(text);
    if tokens.is_empty() {
        return Err(ParseError::EmptyQuery);
    }
    let joined = format!(" {} ", tokens.iter().map(|t| t.norm.as_str()).collect::<Vec<_>>().join(" "));
    let (mut variable, sea_level_phrase) = detect_variable(&joined)
        .ok_or_else(|| ParseError::UnsupportedIntent("no supported ocean variable mentioned".into()))?;

    let Located { places, consumed } = find_places(&tokens, gz);
    if let Some(name) = unknown_place(&tokens, &consumed) {
        return Err(ParseError::UnknownLocation(name));
    }
    if places.is_empty() {
        return Err(ParseError::UnsupportedIntent("no location mentioned".into()));
    }
    if places.len() > 2 {
        return Err(ParseError::UnsupportedIntent(format!(
            "at most two locations per question, got {}",
            places.len()
        )));
    }

    let words: Vec<&str> = tokens
        .iter()
        .zip(&consumed)
        .map(|(t, c)| if *c { "" } else { t.norm.as_str() })
        .collect();
    let period = resolve_time_expression(&words, now)?;

    let mut stat = detect_stat(&joined);
    if sea_level_phrase && months_spanned(&period) >= 2 && !matches!(stat, Some(Stat::Max | Stat::Min)) {
        variable = Variable::MonthlyMeanSeaLevel;
    }
    if places.len() == 2 {
        stat = Some(Stat::Compare);
    }
    let stat = stat.unwrap_or(Stat::FullSeries);

    let resolution = if variable == Variable::WaterLevel
        && (has_phrase(&joined, &["6-minute", "six-minute", "6 minute", "six minute", "6min"]))
    {
        Resolution::SixMinute
    } else {
        variable.default_resolution()
    };
    let time = period.with_resolution(resolution);

    let datum = tokens
        .iter()
        .filter(|t| t.raw.chars().all(|c| c.is_ascii_uppercase()))
        .find_map(|t| t.raw.parse::<Datum>().ok());

    let mut selectors = Vec::new();
    let mut locations = Vec::new();
    for (label, place) in places {
        let selector = match (variable, place) {
            (Variable::WaterLevel | Variable::MonthlyMeanSeaLevel, Place::Station(s)) => SpatialSelector::Station(s.id),
            (Variable::WaterLevel | Variable::MonthlyMeanSeaLevel, Place::Region(r)) => {
                return Err(ParseError::UnsupportedIntent(format!(
                    "{} is a region; tide-gauge data needs a station",
                    r.name
                )))
            }
            (Variable::CoraZeta, Place::Station(s)) => SpatialSelector::Point(GeoPoint { lat: s.lat, lon: s.lon }),
            (Variable::CoraZeta, Place::Region(r)) => SpatialSelector::Point(GeoPoint { lat: r.lat, lon: r.lon }),
            (Variable::SeaSurfaceTemperature, Place::Region(r)) => SpatialSelector::Region(r.key),
            (Variable::SeaSurfaceTemperature, Place::Station(s)) => SpatialSelector::BBox(bbox_around(s.lat, s.lon, 0.5)),
        };
        selectors.push(selector);
        locations.push(label);
    }

    let q = StructuredQuery {
        variable,
        stat,
        selectors,
        locations,
        time,
        dataset_hint: Some(variable.family()),
        datum: datum.filter(|_| matches!(variable, Variable::WaterLevel | Variable::MonthlyMeanSeaLevel)),
    };
    q.validate().map_err(ParseError::UnsupportedIntent)?;
    Ok(q)
}
