//! Brute-force oracles and input strategies shared by the property suite and
//! the acceptance gate. Each `*_case` returns a description of the first mismatch.

#![allow(dead_code)]

use std::sync::Arc;

use chrono::{DateTime, Duration, TimeZone, Utc};
use proptest::prelude::*;
use seagrounded::analysis::{haversine_km, linear_trend, nearest_node, summary_stats, threshold_mask, Node, EARTH_RADIUS_KM};
use seagrounded::model::{GeoPoint, GridSlice, Series, Unit, Variable};
use seagrounded::retrieval::{DocMeta, DocStore, Embedder};

pub type Check = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn t0() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

pub fn summary_inputs() -> impl Strategy<Value = Vec<Option<f64>>> {
    prop::collection::vec(prop::option::weighted(0.9, -500.0f64..500.0), 1..300)
}

pub fn summary_case(values: Vec<Option<f64>>) -> Check {
    let ts = (0..values.len()).map(|i| t0() + Duration::hours(i as i64)).collect();
    let s = Series::new(ts, values.clone(), Unit::Meters, None, Variable::WaterLevel).unwrap();
    let valid: Vec<(usize, f64)> = values.iter().enumerate().filter_map(|(i, v)| v.map(|v| (i, v))).collect();
    let st = match summary_stats(&s) {
        Err(_) if valid.is_empty() => return Ok(()),
        Err(e) => return Err(format!("unexpected error {e}")),
        Ok(st) => st,
    };
    ensure!(!valid.is_empty(), "stats over an all-missing series");
    let n = valid.len() as f64;
    let mean = valid.iter().map(|p| p.1).sum::<f64>() / n;
    let var = valid.iter().map(|p| (p.1 - mean).powi(2)).sum::<f64>() / n;
    let (mut imin, mut imax) = (valid[0], valid[0]);
    for &p in &valid {
        if p.1 < imin.1 {
            imin = p;
        }
        if p.1 > imax.1 {
            imax = p;
        }
    }
    ensure!(st.count == valid.len(), "count {} vs {}", st.count, valid.len());
    ensure!(st.min == imin.1 && st.max == imax.1, "extremes ({}, {}) vs ({}, {})", st.min, st.max, imin.1, imax.1);
    ensure!(st.argmin_time == t0() + Duration::hours(imin.0 as i64), "argmin_time");
    ensure!(st.argmax_time == t0() + Duration::hours(imax.0 as i64), "argmax_time");
    ensure!(close(st.mean, mean, 1e-9), "mean {} vs {}", st.mean, mean);
    ensure!(close(st.std, var.sqrt(), 1e-9), "std {} vs {}", st.std, var.sqrt());
    Ok(())
}

pub fn trend_inputs() -> impl Strategy<Value = (f64, f64, usize, i64)> {
    (-50.0f64..50.0, -100.0f64..100.0, 2usize..400, 1i64..800)
}

/// Noise-free line with a planted slope in units per mean Gregorian year.
pub fn trend_case((slope, intercept, n, step_hours): (f64, f64, usize, i64)) -> Check {
    let ts: Vec<_> = (0..n).map(|i| t0() + Duration::hours(i as i64 * step_hours)).collect();
    let years = |t: DateTime<Utc>| (t - t0()).num_seconds() as f64 / (365.2425 * 86400.0);
    let values = ts.iter().map(|&t| Some(intercept + slope * years(t))).collect();
    let s = Series::new(ts, values, Unit::Meters, None, Variable::WaterLevel).unwrap();
    let tr = linear_trend(&s).map_err(|e| e.to_string())?;
    ensure!((tr.slope - slope).abs() <= 1e-9 * slope.abs().max(1.0), "slope {} vs {}", tr.slope, slope);
    ensure!(
        (tr.intercept - intercept).abs() <= 1e-9 * intercept.abs().max(1.0),
        "intercept {} vs {}",
        tr.intercept,
        intercept
    );
    Ok(())
}

pub type NodeInput = ((f64, f64), Vec<(f64, f64, bool)>);

pub fn node_inputs() -> impl Strategy<Value = NodeInput> {
    (
        (-80.0f64..80.0, -179.0f64..179.0),
        prop::collection::vec((-80.0f64..80.0, -179.0f64..179.0, prop::bool::weighted(0.8)), 1..200),
    )
}

pub fn nearest_case((p, nodes): NodeInput) -> Check {
    let p = GeoPoint::new(p.0, p.1).unwrap();
    let nodes: Vec<Node> = nodes.into_iter().map(|(lat, lon, valid)| Node { lat, lon, valid }).collect();
    let mut oracle: Option<(usize, f64)> = None;
    for (i, n) in nodes.iter().enumerate().filter(|(_, n)| n.valid) {
        // Spherical law of cosines, independent of the haversine form.
        let (a, b) = (p.lat.to_radians(), n.lat.to_radians());
        let c = a.sin() * b.sin() + a.cos() * b.cos() * (n.lon - p.lon).to_radians().cos();
        let d = EARTH_RADIUS_KM * c.clamp(-1.0, 1.0).acos();
        if oracle.map_or(true, |(_, bd)| d < bd - 1e-6) {
            oracle = Some((i, d));
        }
    }
    match (nearest_node(p, &nodes), oracle) {
        (Err(_), None) => Ok(()),
        (Ok((i, d)), Some((j, od))) => {
            ensure!((d - od).abs() < 1e-3, "distance {d} vs {od}");
            if i != j {
                let dj = haversine_km(p, GeoPoint::new(nodes[j].lat, nodes[j].lon).unwrap());
                ensure!((dj - d).abs() < 1e-3, "picked node {i} at {d} km, oracle node {j} at {dj} km");
            }
            Ok(())
        }
        (got, want) => Err(format!("got {got:?}, oracle {want:?}")),
    }
}

/// Looks vectors up by text so the oracle can score chunks independently.
struct TableEmbedder {
    table: Vec<(String, Vec<f64>)>,
}

impl Embedder for TableEmbedder {
    fn dimension(&self) -> usize {
        8
    }

    fn embed(&self, text: &str) -> Vec<f64> {
        let v = &self.table.iter().find(|(t, _)| t == text).expect("known text").1;
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter().map(|x| x / norm).collect()
    }

    fn id(&self) -> String {
        "table-8".into()
    }
}

pub type SearchInput = (Vec<Vec<f64>>, usize);

/// 50 chunk vectors plus one query vector, and k.
pub fn search_inputs() -> impl Strategy<Value = SearchInput> {
    (
        prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 8), 51).prop_filter("non-zero vectors", |vs| {
            vs.iter().all(|v| v.iter().map(|x| x * x).sum::<f64>() > 1e-6)
        }),
        1usize..12,
    )
}

pub fn search_case((vectors, k): SearchInput) -> Check {
    let table: Vec<(String, Vec<f64>)> = vectors
        .iter()
        .enumerate()
        .map(|(i, v)| (if i == 50 { "query".to_string() } else { format!("chunk{i:02}") }, v.clone()))
        .collect();
    let store = DocStore::in_memory(Arc::new(TableEmbedder { table: table.clone() }));
    for (text, _) in &table[..50] {
        let meta = DocMeta {
            doc_id: text.clone(),
            title: text.clone(),
            year: None,
            origin: String::new(),
        };
        store.ingest(&meta, text, 1000, 0).map_err(|e| e.to_string())?;
    }
    let hits = store.search("query", k).map_err(|e| e.to_string())?;
    let q = &table[50].1;
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut oracle: Vec<(f64, String)> = table[..50]
        .iter()
        .map(|(t, v)| (v.iter().zip(q).map(|(a, b)| a * b).sum::<f64>() / (norm(v) * norm(q)), t.clone()))
        .collect();
    oracle.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    ensure!(hits.len() == k, "{} hits for k={k}", hits.len());
    for (rank, (h, (score, id))) in hits.iter().zip(&oracle).enumerate() {
        ensure!((h.score - score).abs() < 1e-9, "rank {rank}: score {} vs {score}", h.score);
        if &h.chunk.doc_id != id {
            let other = oracle.iter().find(|o| o.1 == h.chunk.doc_id).unwrap();
            ensure!((other.0 - score).abs() < 1e-9, "rank {rank}: {} instead of {id}", h.chunk.doc_id);
        }
    }
    Ok(())
}

pub type ThresholdInput = (Vec<Option<f64>>, Vec<f64>);

pub fn threshold_inputs() -> impl Strategy<Value = ThresholdInput> {
    (
        prop::collection::vec(prop::option::weighted(0.85, 10.0f64..32.0), 1..120),
        prop::collection::vec(5.0f64..35.0, 2..8),
    )
}

pub fn threshold_case((cells, mut thresholds): ThresholdInput) -> Check {
    let grid = GridSlice::new(
        vec![0.0],
        (0..cells.len()).map(|i| i as f64).collect(),
        cells.clone(),
        Unit::Celsius,
        t0(),
        Variable::SeaSurfaceTemperature,
    )
    .unwrap();
    thresholds.sort_by(f64::total_cmp);
    let mut last = f64::INFINITY;
    for th in thresholds {
        match threshold_mask(&grid, th) {
            Err(_) => ensure!(cells.iter().all(|c| c.is_none()), "error on a grid with data"),
            Ok(r) => {
                let brute = cells.iter().flatten().filter(|&&v| v >= th).count();
                ensure!(r.exceed_count == brute, "exceed_count {} vs {brute} at {th}", r.exceed_count);
                ensure!(r.exceed_fraction <= last, "fraction rose to {} at {th}", r.exceed_fraction);
                last = r.exceed_fraction;
            }
        }
    }
    Ok(())
}
