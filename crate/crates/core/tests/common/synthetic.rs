//! Offline stand-in for the NOAA providers. It answers the same URLs the
//! clients build, in the same wire formats, with deterministic synthetic data.
//! A few reported values are planted so acceptance checks have fixed targets.

#![allow(dead_code)]

use std::f64::consts::PI;
use std::time::Duration;

use chrono::{DateTime, Datelike, Duration as ChronoDuration, NaiveDate, NaiveDateTime, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reqwest::Url;
use seagrounded::clients::transport::{TransportError, Upstream, UpstreamResponse};
use serde_json::json;

use super::ncwrite::{build, Attr, Data, Var};

/// Boston hourly maximum for 2024, relative to MSL.
pub const BOSTON_2024_MAX: f64 = 2.79;
pub const BOSTON_2024_MAX_AT: (u32, u32, u32) = (1, 10, 16);
/// Gulf of Mexico SST extremes on 2019-12-31, °C.
pub const GULF_SST_MIN: f64 = 13.04;
pub const GULF_SST_MAX: f64 = 28.34;
pub const GULF_SST_MIN_CELL: (f64, f64) = (29.025, -88.475);
pub const GULF_SST_MAX_CELL: (f64, f64) = (18.975, -86.225);

struct StationSpec {
    id: &'static str,
    name: &'static str,
    lat: f64,
    lon: f64,
    /// M2, S2, N2, K1, O1 amplitudes in meters.
    amps: [f64; 5],
    /// MSL offset in 1992 and linear rise per year, meters.
    base: f64,
    rise: f64,
}

const STATIONS: &[StationSpec] = &[
    StationSpec { id: "8443970", name: "Boston", lat: 42.3539, lon: -71.0503, amps: [1.37, 0.22, 0.31, 0.14, 0.11], base: -0.02, rise: 0.0031 },
    StationSpec { id: "8723214", name: "Virginia Key", lat: 25.7314, lon: -80.1618, amps: [0.30, 0.05, 0.07, 0.04, 0.03], base: -0.01, rise: 0.0042 },
    StationSpec { id: "8518750", name: "The Battery", lat: 40.7006, lon: -74.0142, amps: [0.67, 0.13, 0.15, 0.10, 0.05], base: -0.02, rise: 0.0030 },
    StationSpec { id: "8724580", name: "Key West", lat: 24.5557, lon: -81.8079, amps: [0.18, 0.05, 0.04, 0.11, 0.10], base: -0.01, rise: 0.0035 },
    StationSpec { id: "9414290", name: "San Francisco", lat: 37.8063, lon: -122.4659, amps: [0.58, 0.13, 0.12, 0.37, 0.23], base: -0.01, rise: 0.0020 },
    StationSpec { id: "9447130", name: "Seattle", lat: 47.6026, lon: -122.3393, amps: [1.07, 0.26, 0.21, 0.83, 0.45], base: -0.01, rise: 0.0021 },
];

/// Constituent periods in hours, same order as `amps`.
const PERIODS: [f64; 5] = [12.420_601_2, 12.0, 12.658_347_5, 23.934_472_1, 25.819_341_7];
const PHASES: [f64; 5] = [0.3, 1.1, 2.0, 0.7, 2.6];

/// Monthly MSL anomalies reported for 2022, meters relative to MSL.
const BOSTON_2022_MONTHLY: [f64; 12] = [0.052, 0.021, 0.083, 0.104, 0.071, 0.062, 0.079, 0.091, 0.133, 0.162, 0.141, 0.118];
const VIRGINIA_KEY_2022_MONTHLY: [f64; 12] = [0.081, 0.058, 0.072, 0.094, 0.113, 0.121, 0.132, 0.151, 0.214, 0.271, 0.223, 0.134];

fn station(id: &str) -> Option<&'static StationSpec> {
    STATIONS.iter().find(|s| s.id == id)
}

fn epoch() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2000, 1, 1, 0, 0, 0).unwrap()
}

fn seed(parts: &[u64]) -> ChaCha8Rng {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for p in parts {
        h ^= *p;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    ChaCha8Rng::seed_from_u64(h)
}

fn year_frac(t: DateTime<Utc>) -> f64 {
    t.year() as f64 + t.ordinal0() as f64 / 365.25
}

/// Water level relative to MSL at `t`, before any planting or clamping.
fn tide(s: &StationSpec, t: DateTime<Utc>) -> f64 {
    let hours = (t - epoch()).num_minutes() as f64 / 60.0;
    let mut v = s.base + s.rise * (year_frac(t) - 1992.0);
    for k in 0..5 {
        v += s.amps[k] * (2.0 * PI * hours / PERIODS[k] + PHASES[k]).cos();
    }
    v += 0.10 * (2.0 * PI * hours / (24.0 * 4.3)).sin() + 0.06 * (2.0 * PI * hours / (24.0 * 11.7)).sin();
    let mut rng = seed(&[s.id.parse().unwrap_or(0), t.timestamp() as u64]);
    v + rng.gen_range(-0.05..0.05)
}

fn water_level_value(s: &StationSpec, t: DateTime<Utc>) -> f64 {
    let (m, d, h) = BOSTON_2024_MAX_AT;
    if s.id == "8443970" && t == Utc.with_ymd_and_hms(2024, m, d, h, 0, 0).unwrap() {
        return BOSTON_2024_MAX;
    }
    let v = tide(s, t);
    if s.id == "8443970" {
        v.min(2.65)
    } else {
        v
    }
}

fn ok(content_type: &str, bytes: Vec<u8>) -> Result<UpstreamResponse, TransportError> {
    Ok(UpstreamResponse {
        status: 200,
        content_type: content_type.into(),
        bytes,
    })
}

fn coops_error(message: &str) -> Result<UpstreamResponse, TransportError> {
    ok("application/json", json!({"error": {"message": message}}).to_string().into_bytes())
}

fn parse_coops_date(s: &str) -> Option<DateTime<Utc>> {
    NaiveDateTime::parse_from_str(s, "%Y%m%d %H:%M")
        .ok()
        .or_else(|| NaiveDate::parse_from_str(s, "%Y%m%d").ok().map(|d| d.and_hms_opt(0, 0, 0).unwrap()))
        .map(|n| n.and_utc())
}

fn coops(url: &Url) -> Result<UpstreamResponse, TransportError> {
    let q = |k: &str| url.query_pairs().find(|(key, _)| key == k).map(|(_, v)| v.into_owned());
    let product = q("product").unwrap_or_default();
    let Some(st) = q("station").and_then(|id| station(&id)) else {
        return coops_error("Wrong Station ID: Check the Station ID and try again.");
    };
    let (Some(begin), Some(end)) = (
        q("begin_date").and_then(|s| parse_coops_date(&s)),
        q("end_date").and_then(|s| parse_coops_date(&s)),
    ) else {
        return coops_error("Invalid begin_date or end_date.");
    };
    if begin.year() < 1921 {
        return coops_error("No data was found. This product may not be offered at this station at the requested time.");
    }
    match product.as_str() {
        "water_level" | "hourly_height" => {
            let step = if product == "water_level" { 6 } else { 60 };
            let flags = if product == "water_level" { "0,0,0,0" } else { "0,0" };
            let flagged = if product == "water_level" { "0,1,0,0" } else { "0,1" };
            let mut data = Vec::new();
            let mut t = begin;
            while t <= end {
                let idx = t.timestamp() / 60 / step;
                let (v, f) = if idx % 1511 == 7 {
                    (String::new(), flags)
                } else if idx % 997 == 13 {
                    (format!("{:.3}", water_level_value(st, t) + 0.9), flagged)
                } else {
                    (format!("{:.3}", water_level_value(st, t)), flags)
                };
                let quality = if t >= Utc.with_ymd_and_hms(2024, 11, 1, 0, 0, 0).unwrap() { "p" } else { "v" };
                data.push(json!({"t": t.format("%Y-%m-%d %H:%M").to_string(), "v": v, "s": "", "f": f, "q": quality}));
                t += ChronoDuration::minutes(step);
            }
            if data.is_empty() {
                return coops_error("No data was found. This product may not be offered at this station at the requested time.");
            }
            let body = json!({
                "metadata": {"id": st.id, "name": st.name, "lat": format!("{:.4}", st.lat), "lon": format!("{:.4}", st.lon)},
                "data": data,
            });
            ok("application/json", body.to_string().into_bytes())
        }
        "monthly_mean" => {
            let mut csv = String::from(
                " Year, Month, Highest, MHHW, MHW, MSL, MTL, MLW, MLLW, DTL, GT, MN, DHQ, DLQ, HWI, LWI, Lowest, Inferred\n",
            );
            let (mut y, mut m) = (begin.year(), begin.month());
            while (y, m) <= (end.year(), end.month()) {
                let msl = match (st.id, y) {
                    ("8443970", 2022) => BOSTON_2022_MONTHLY[m as usize - 1],
                    ("8723214", 2022) => VIRGINIA_KEY_2022_MONTHLY[m as usize - 1],
                    _ => {
                        let t = Utc.with_ymd_and_hms(y, m, 15, 0, 0, 0).unwrap();
                        st.base + st.rise * (year_frac(t) - 1992.0) + 0.05 * (2.0 * PI * (m as f64 - 4.0) / 12.0).sin()
                    }
                };
                let a = st.amps[0] + st.amps[1] * 0.3;
                let row = [
                    msl + a * 1.9,
                    msl + a * 1.08,
                    msl + a,
                    msl,
                    msl + 0.004,
                    msl - a,
                    msl - a * 1.08,
                    msl + 0.002,
                    2.0 * a,
                    2.0 * a * 1.08,
                    a * 0.08,
                    a * 0.08,
                ];
                let cells: Vec<String> = row.iter().map(|v| format!("{v:.3}")).collect();
                csv.push_str(&format!("{y},{m},{},3.42,9.81,{:.3},0\n", cells.join(","), msl - a * 1.9));
                m += 1;
                if m == 13 {
                    m = 1;
                    y += 1;
                }
            }
            ok("text/csv", csv.into_bytes())
        }
        other => coops_error(&format!("The product {other} is not supported by this synthetic provider.")),
    }
}

fn query_f64(url: &Url, key: &str) -> Option<f64> {
    url.query_pairs().find(|(k, _)| k == key).and_then(|(_, v)| v.parse().ok())
}

/// Unstructured-looking mesh: a jittered grid, dry west of the request center.
fn cora_mesh(url: &Url) -> Result<UpstreamResponse, TransportError> {
    let bbox: Vec<f64> = url
        .query_pairs()
        .find(|(k, _)| k == "bbox")
        .map(|(_, v)| v.split(',').filter_map(|p| p.parse().ok()).collect())
        .unwrap_or_default();
    let [lat_min, lat_max, lon_min, lon_max] = bbox[..] else {
        return Ok(UpstreamResponse { status: 400, content_type: "text/plain".into(), bytes: b"bad bbox".to_vec() });
    };
    let center_lon = (lon_min + lon_max) / 2.0;
    let (dlat, dlon) = (0.02, 0.025);
    let rows = ((lat_max - lat_min) / dlat).floor() as usize + 1;
    let cols = ((lon_max - lon_min) / dlon).floor() as usize + 1;
    let (mut xs, mut ys, mut depth, mut ids) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for r in 0..rows {
        for c in 0..cols {
            let mut rng = seed(&[r as u64, c as u64, (lat_min * 1e4) as i64 as u64]);
            let lat = lat_min + r as f64 * dlat + rng.gen_range(-0.004..0.004);
            let lon = lon_min + c as f64 * dlon + rng.gen_range(-0.004..0.004);
            ys.push(lat);
            xs.push(lon);
            let dry = lon < center_lon - 0.005;
            depth.push(if dry { -99999.0f32 } else { 2.0 + 30.0 * (lon - center_lon).abs() as f32 });
            ids.push(1_200_000 + (r * cols + c) as i32);
        }
    }
    let n = xs.len();
    let bytes = build(
        &[("node", n)],
        &[
            Var::new("x", &["node"], Data::F64(xs)).text("units", "degrees_east"),
            Var::new("y", &["node"], Data::F64(ys)).text("units", "degrees_north"),
            Var::new("depth", &["node"], Data::F32(depth))
                .text("units", "m")
                .attr("_FillValue", Attr::F32(-99999.0)),
            Var::new("node", &["node"], Data::I32(ids)),
        ],
        &[("title", "CORA mesh subset (synthetic)")],
    );
    ok("application/x-netcdf", bytes)
}

fn cora_series(url: &Url) -> Result<UpstreamResponse, TransportError> {
    let q = |k: &str| url.query_pairs().find(|(key, _)| key == k).map(|(_, v)| v.into_owned());
    let parse = |s: Option<String>| s.and_then(|s| DateTime::parse_from_rfc3339(&s).ok()).map(|t| t.with_timezone(&Utc));
    let (Some(start), Some(end), Some(node)) = (parse(q("start")), parse(q("end")), q("node").and_then(|n| n.parse::<u64>().ok())) else {
        return Ok(UpstreamResponse { status: 400, content_type: "text/plain".into(), bytes: b"bad request".to_vec() });
    };
    let origin = Utc.with_ymd_and_hms(1979, 1, 1, 0, 0, 0).unwrap();
    let boston = station("8443970").unwrap();
    let mut first = start;
    if first.timestamp() % 3600 != 0 {
        first += ChronoDuration::seconds(3600 - first.timestamp().rem_euclid(3600));
    }
    let (mut times, mut zeta) = (Vec::new(), Vec::new());
    let mut t = first;
    while t <= end {
        let h = (t - origin).num_hours();
        times.push(h as f64);
        let v = if h % 401 == 5 {
            -99999.0
        } else {
            // Model output is smoother than observations and slightly damped.
            (0.93 * tide(boston, t) + (node % 7) as f64 * 0.001) as f32
        };
        zeta.push(v);
        t += ChronoDuration::hours(1);
    }
    let n = times.len();
    let bytes = build(
        &[("time", n)],
        &[
            Var::new("time", &["time"], Data::F64(times)).text("units", "hours since 1979-01-01 00:00:00"),
            Var::new("zeta", &["time"], Data::F32(zeta))
                .text("units", "m")
                .text("long_name", "water surface elevation above geoid")
                .attr("_FillValue", Attr::F32(-99999.0)),
        ],
        &[("title", "CORA zeta at one node (synthetic)")],
    );
    ok("application/x-netcdf", bytes)
}

/// Crude Gulf of Mexico land mask.
pub fn gulf_land(lat: f64, lon: f64) -> bool {
    let north = lat > 29.4 + 0.4 * ((lon + 89.0) / 9.0).powi(2);
    let west = lon < -97.4;
    let florida = lat > 25.0 && lon > -82.8 + (27.5 - lat) * 0.35;
    let yucatan = lat < 21.4 && lon > -90.4 && lon < -86.8;
    let campeche = lat < 18.7 && lon < -91.0;
    let cuba = lat > 21.9 && lat < 23.2 && lon > -84.9;
    north || west || florida || yucatan || campeche || cuba
}

fn near(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-6
}

fn gulf_sst(lat: f64, lon: f64) -> f64 {
    if near(lat, GULF_SST_MIN_CELL.0) && near(lon, GULF_SST_MIN_CELL.1) {
        return GULF_SST_MIN;
    }
    if near(lat, GULF_SST_MAX_CELL.0) && near(lon, GULF_SST_MAX_CELL.1) {
        return GULF_SST_MAX;
    }
    let mut v = 27.6 - 0.92 * (lat - 18.0);
    v += 1.6 * (-((lon + 86.0).powi(2) / 4.0 + (lat - 25.0).powi(2) / 6.0)).exp();
    if lat > 27.5 {
        v -= 1.8 * ((lat - 27.5) / 2.0).min(1.0);
    }
    let mut rng = seed(&[(lat * 1000.0) as i64 as u64, (lon * 1000.0) as i64 as u64]);
    v += rng.gen_range(-0.15..0.15);
    v.clamp(13.10, 28.25)
}

fn crw(url: &Url) -> Result<UpstreamResponse, TransportError> {
    let query = url.query().unwrap_or_default().replace("%5B", "[").replace("%5D", "]");
    let groups: Vec<&str> = query
        .split('[')
        .skip(1)
        .map(|g| g.trim_end_matches(']').trim_matches(|c| c == '(' || c == ')'))
        .collect();
    let bad = || Ok(UpstreamResponse { status: 400, content_type: "text/plain".into(), bytes: b"Error: bad constraint".to_vec() });
    if groups.len() != 3 {
        return bad();
    }
    let Ok(time) = DateTime::parse_from_rfc3339(groups[0]) else { return bad() };
    let pair = |g: &str| -> Option<(f64, f64)> {
        let (a, b) = g.split_once("):(")?;
        Some((a.parse().ok()?, b.parse().ok()?))
    };
    let (Some((lat_hi, lat_lo)), Some((lon_lo, lon_hi))) = (pair(groups[1]), pair(groups[2])) else {
        return bad();
    };
    // CoralTemp cell centers sit on odd multiples of 0.025°.
    let centers = |lo: f64, hi: f64| -> Vec<f64> {
        let mut k = ((lo - 0.025) / 0.05).ceil() as i64;
        let mut out = Vec::new();
        loop {
            let c = 0.025 + k as f64 * 0.05;
            let c = (c * 1000.0).round() / 1000.0;
            if c > hi + 1e-9 {
                break;
            }
            out.push(c);
            k += 1;
        }
        out
    };
    let mut lats = centers(lat_lo, lat_hi);
    lats.reverse();
    let lons = centers(lon_lo, lon_hi);
    let gulf_day = time.date_naive() == NaiveDate::from_ymd_opt(2019, 12, 31).unwrap();
    let mut sst = Vec::with_capacity(lats.len() * lons.len());
    for &lat in &lats {
        for &lon in &lons {
            let v = if gulf_land(lat, lon) {
                -32768i16
            } else {
                let base = gulf_sst(lat, lon);
                let v = if gulf_day { base } else { base + 2.0 * (time.ordinal() as f64 / 58.0).sin() };
                (v * 100.0).round() as i16
            };
            sst.push(v);
        }
    }
    let seconds = time.timestamp() as f64;
    let (ny, nx) = (lats.len(), lons.len());
    let bytes = build(
        &[("time", 1), ("latitude", ny), ("longitude", nx)],
        &[
            Var::new("time", &["time"], Data::F64(vec![seconds])).text("units", "seconds since 1970-01-01T00:00:00Z"),
            Var::new("latitude", &["latitude"], Data::F32(lats.iter().map(|&v| v as f32).collect()))
                .text("units", "degrees_north"),
            Var::new("longitude", &["longitude"], Data::F32(lons.iter().map(|&v| v as f32).collect()))
                .text("units", "degrees_east"),
            Var::new("CRW_SST", &["time", "latitude", "longitude"], Data::I16(sst))
                .text("units", "degree_C")
                .attr("_FillValue", Attr::I16(-32768))
                .attr("scale_factor", Attr::F64(0.01))
                .attr("add_offset", Attr::F64(0.0)),
        ],
        &[("title", "CoralTemp daily SST subset (synthetic)")],
    );
    ok("application/x-netcdf", bytes)
}

/// Serves CO-OPS, CORA and CRW URLs from the generators above.
#[derive(Debug, Default, Clone, Copy)]
pub struct SyntheticUpstream;

impl Upstream for SyntheticUpstream {
    fn get(&self, url: &str, _timeout: Duration) -> Result<UpstreamResponse, TransportError> {
        let parsed = Url::parse(url).map_err(|e| TransportError::Network {
            url: url.to_string(),
            message: e.to_string(),
            retryable: false,
        })?;
        let host = parsed.host_str().unwrap_or_default();
        let path = parsed.path();
        if host.contains("tidesandcurrents") {
            coops(&parsed)
        } else if host.starts_with("cora.") && path.ends_with("mesh.nc") {
            cora_mesh(&parsed)
        } else if host.starts_with("cora.") && path.ends_with("zeta.nc") {
            cora_series(&parsed)
        } else if path.contains("NOAA_DHW") {
            crw(&parsed)
        } else {
            Ok(UpstreamResponse {
                status: 404,
                content_type: "text/plain".into(),
                bytes: format!("no synthetic handler for {url}").into_bytes(),
            })
        }
    }

    fn origin(&self) -> &str {
        "synthetic"
    }
}
