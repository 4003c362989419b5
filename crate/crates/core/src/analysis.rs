//! Numerical routines over series and grids.
//!
//! Sums use Neumaier compensation so results do not depend on platform
//! summation order. Standard deviations are population (divide by `n`).

use std::collections::BTreeMap;

use chrono::{DateTime, Datelike, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Datum, GeoPoint, GridSlice, Series, SummaryStats, TimeRange, Unit};

/// Mean Earth radius used for great-circle distances.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

const SECONDS_PER_YEAR: f64 = 365.2425 * 86_400.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("series has no unmasked values")]
    EmptySeries,
    #[error("need at least two unmasked points, found {0}")]
    InsufficientData(usize),
    #[error("all timestamps are equal")]
    DegenerateTime,
    #[error("baseline has no entry for calendar month {0}")]
    MissingBaselineEntry(u32),
    #[error("grid has no unmasked cells")]
    FullyMasked,
    #[error("no valid node")]
    NoValidNode,
    #[error("cannot combine {left} with {right} without a conversion step")]
    UnitMismatch { left: String, right: String },
}

/// Compensated (Neumaier) summation.
#[derive(Debug, Default, Clone, Copy)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::default();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().copied().collect::<CompensatedSum>().total() / n;
    let var = values
        .iter()
        .map(|v| (v - mean) * (v - mean))
        .collect::<CompensatedSum>()
        .total()
        / n;
    // Guard against rounding pushing the mean outside [min, max].
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    (mean.clamp(lo, hi), var.max(0.0).sqrt())
}

pub fn summary_stats(s: &Series) -> Result<SummaryStats, AnalysisError> {
    let points: Vec<(DateTime<Utc>, f64)> = s.iter_valid().collect();
    let (first_t, first_v) = *points.first().ok_or(AnalysisError::EmptySeries)?;
    let (mut min, mut max) = (first_v, first_v);
    let (mut argmin_time, mut argmax_time) = (first_t, first_t);
    for &(t, v) in &points[1..] {
        if v < min {
            min = v;
            argmin_time = t;
        }
        if v > max {
            max = v;
            argmax_time = t;
        }
    }
    let values: Vec<f64> = points.iter().map(|p| p.1).collect();
    let (mean, std) = mean_std(&values);
    Ok(SummaryStats {
        min,
        max,
        mean,
        std,
        argmin_time,
        argmax_time,
        count: values.len(),
    })
}

/// Statistics over the unmasked cells of a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub std: f64,
    pub count: usize,
    pub masked: usize,
    pub argmin: GeoPoint,
    pub argmax: GeoPoint,
}

pub fn grid_summary(g: &GridSlice) -> Result<GridSummary, AnalysisError> {
    let ncols = g.lons.len();
    let mut values = Vec::with_capacity(g.values.len());
    let mut best: Option<((f64, usize), (f64, usize))> = None;
    for (i, v) in g.values.iter().enumerate() {
        let Some(v) = *v else { continue };
        values.push(v);
        best = Some(match best {
            None => ((v, i), (v, i)),
            Some((lo, hi)) => (if v < lo.0 { (v, i) } else { lo }, if v > hi.0 { (v, i) } else { hi }),
        });
    }
    let ((min, imin), (max, imax)) = best.ok_or(AnalysisError::FullyMasked)?;
    let at = |i: usize| GeoPoint {
        lat: g.lats[i / ncols],
        lon: g.lons[i % ncols],
    };
    let (mean, std) = mean_std(&values);
    Ok(GridSummary {
        min,
        max,
        mean,
        std,
        count: values.len(),
        masked: g.values.len() - values.len(),
        argmin: at(imin),
        argmax: at(imax),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendResult {
    /// Units per year.
    pub slope: f64,
    /// Value at the first unmasked timestamp.
    pub intercept: f64,
    pub r_squared: f64,
    pub n: usize,
}

/// Ordinary least squares of value against years since the first unmasked point.
pub fn linear_trend(s: &Series) -> Result<TrendResult, AnalysisError> {
    let points: Vec<(DateTime<Utc>, f64)> = s.iter_valid().collect();
    if points.len() < 2 {
        return Err(AnalysisError::InsufficientData(points.len()));
    }
    let t0 = points[0].0;
    let xs: Vec<f64> = points
        .iter()
        .map(|(t, _)| (*t - t0).num_milliseconds() as f64 / 1000.0 / SECONDS_PER_YEAR)
        .collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let n = xs.len() as f64;
    let xm = xs.iter().copied().collect::<CompensatedSum>().total() / n;
    let ym = ys.iter().copied().collect::<CompensatedSum>().total() / n;
    let mut sxx = CompensatedSum::default();
    let mut sxy = CompensatedSum::default();
    let mut syy = CompensatedSum::default();
    for (x, y) in xs.iter().zip(&ys) {
        let (dx, dy) = (x - xm, y - ym);
        sxx.add(dx * dx);
        sxy.add(dx * dy);
        syy.add(dy * dy);
    }
    let (sxx, sxy, syy) = (sxx.total(), sxy.total(), syy.total());
    if sxx == 0.0 {
        return Err(AnalysisError::DegenerateTime);
    }
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    // Zero response variance has no explained fraction; report 0.
    let r_squared = if syy == 0.0 {
        0.0
    } else {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    };
    Ok(TrendResult {
        slope,
        intercept,
        r_squared,
        n: points.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClimatologyEntry {
    pub mean: f64,
    pub count: usize,
}

/// Per-calendar-month climatology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub climatology: BTreeMap<u32, ClimatologyEntry>,
    pub reference_span: TimeRange,
    pub unit: Unit,
    #[serde(default)]
    pub datum: Option<Datum>,
}

impl Baseline {
    /// Monthly means of the unmasked values of `s`.
    pub fn monthly_from(s: &Series, reference_span: TimeRange) -> Result<Self, AnalysisError> {
        let mut groups: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
        for (t, v) in s.iter_valid().filter(|(t, _)| reference_span.contains(*t)) {
            groups.entry(t.month()).or_default().push(v);
        }
        if groups.is_empty() {
            return Err(AnalysisError::EmptySeries);
        }
        let climatology = groups
            .into_iter()
            .map(|(m, vals)| {
                let mean = vals.iter().copied().collect::<CompensatedSum>().total() / vals.len() as f64;
                (
                    m,
                    ClimatologyEntry {
                        mean,
                        count: vals.len(),
                    },
                )
            })
            .collect();
        Ok(Baseline {
            climatology,
            reference_span,
            unit: s.unit,
            datum: s.datum,
        })
    }
}

/// Pointwise departure from the monthly climatology; masked points stay masked.
pub fn anomaly(s: &Series, b: &Baseline) -> Result<Series, AnalysisError> {
    if s.unit != b.unit || s.datum != b.datum {
        return Err(AnalysisError::UnitMismatch {
            left: format!("{} {:?}", s.unit.code(), s.datum),
            right: format!("{} {:?}", b.unit.code(), b.datum),
        });
    }
    let values = s
        .timestamps
        .iter()
        .zip(&s.values)
        .map(|(t, v)| match v {
            None => Ok(None),
            Some(v) => b
                .climatology
                .get(&t.month())
                .map(|e| Some(v - e.mean))
                .ok_or(AnalysisError::MissingBaselineEntry(t.month())),
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Series {
        timestamps: s.timestamps.clone(),
        values,
        unit: s.unit,
        datum: s.datum,
        variable: s.variable,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    pub threshold: f64,
    /// Row-major like the grid; true iff unmasked and `value >= threshold`.
    pub mask: Vec<bool>,
    pub exceed_count: usize,
    pub unmasked_count: usize,
    pub exceed_fraction: f64,
}

pub fn threshold_mask(g: &GridSlice, threshold: f64) -> Result<ThresholdResult, AnalysisError> {
    let mask: Vec<bool> = g.values.iter().map(|v| v.is_some_and(|v| v >= threshold)).collect();
    let unmasked_count = g.unmasked_count();
    if unmasked_count == 0 {
        return Err(AnalysisError::FullyMasked);
    }
    let exceed_count = mask.iter().filter(|&&m| m).count();
    Ok(ThresholdResult {
        threshold,
        mask,
        exceed_count,
        unmasked_count,
        exceed_fraction: exceed_count as f64 / unmasked_count as f64,
    })
}

/// Great-circle distance in kilometres.
pub fn haversine_km(a: GeoPoint, b: GeoPoint) -> f64 {
    let (lat1, lat2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = lat2 - lat1;
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub lat: f64,
    pub lon: f64,
    pub valid: bool,
}

/// Closest valid node to `p`; ties go to the lowest index.
pub fn nearest_node(p: GeoPoint, nodes: &[Node]) -> Result<(usize, f64), AnalysisError> {
    let mut best: Option<(usize, f64)> = None;
    for (i, n) in nodes.iter().enumerate().filter(|(_, n)| n.valid) {
        let d = haversine_km(p, GeoPoint { lat: n.lat, lon: n.lon });
        if best.map_or(true, |(_, bd)| d < bd) {
            best = Some((i, d));
        }
    }
    best.ok_or(AnalysisError::NoValidNode)
}
