//! Provider clients end to end through the transport, using the synthetic upstream
//! and NetCDF files written by an independent encoder.

mod common;

use std::sync::Arc;
use std::time::Duration as StdDuration;

use chrono::{NaiveDate, TimeZone, Utc};
use common::ncwrite::{build, Attr, Data, Var};
use common::synthetic::{self, SyntheticUpstream};
use seagrounded::clients::netcdf::NcFile;
use seagrounded::clients::transport::{Transport, TransportError, TransportMode, TransportOptions, Upstream, UpstreamResponse};
use seagrounded::clients::{ClientError, Interval, NoaaClients};
use seagrounded::config::ProvidersConfig;
use seagrounded::model::{BBox, Datum, GeoPoint, Resolution, TimeRange};

#[test]
fn netcdf_masking_and_unpacking() {
    let raw: Vec<i16> = vec![-32768, -999, -600, 0, 150, 2999, 3001, 1234];
    let bytes = build(
        &[("x", raw.len())],
        &[
            Var::new("packed", &["x"], Data::I16(raw))
                .attr("_FillValue", Attr::I16(-32768))
                .attr("missing_value", Attr::I16s(vec![-999]))
                .attr("valid_range", Attr::I16s(vec![-500, 3000]))
                .attr("scale_factor", Attr::F64(0.01))
                .attr("add_offset", Attr::F64(1.0)),
            // No _FillValue attribute: the format's default float fill applies.
            Var::new("plain", &["x"], Data::F32(vec![1.5, f32::from_bits(0x7cf0_0000), -2.25, 0.0, 1.0, 2.0, 3.0, 4.0])),
        ],
        &[],
    );
    let nc = NcFile::parse(&bytes).unwrap();
    let got = nc.read_masked("packed").unwrap();
    let want = [None, None, None, Some(1.0), Some(2.5), Some(30.99), None, Some(13.34)];
    assert_eq!(got.len(), want.len());
    for (g, w) in got.iter().zip(want) {
        match (g, w) {
            (Some(g), Some(w)) => assert!((g - w).abs() < 1e-12, "{g} vs {w}"),
            (g, w) => assert_eq!(*g, w),
        }
    }
    let plain = nc.read_masked("plain").unwrap();
    assert_eq!(&plain[..3], &[Some(1.5), None, Some(-2.25)]);
}

#[test]
fn netcdf_cf_time_decoding() {
    let bytes = build(
        &[("time", 3)],
        &[Var::new("time", &["time"], Data::F64(vec![0.0, 1.5, 126_000.0])).text("units", "hours since 1979-01-01 00:00:00")],
        &[],
    );
    let nc = NcFile::parse(&bytes).unwrap();
    let t = nc.read_times("time").unwrap();
    assert_eq!(t[0], Utc.with_ymd_and_hms(1979, 1, 1, 0, 0, 0).unwrap());
    assert_eq!(t[1], Utc.with_ymd_and_hms(1979, 1, 1, 1, 30, 0).unwrap());
    assert_eq!(t[2], Utc.with_ymd_and_hms(1993, 5, 17, 0, 0, 0).unwrap());
}

fn clients(mode: TransportMode, dir: &std::path::Path, upstream: Arc<dyn Upstream>) -> NoaaClients {
    let fixed = Utc.with_ymd_and_hms(2025, 6, 15, 12, 0, 0).unwrap();
    let transport = Transport::with_upstream(
        mode,
        dir,
        TransportOptions {
            rate_limit_per_sec: 0.0,
            timeout: StdDuration::from_secs(5),
        },
        upstream,
    )
    .unwrap()
    .with_clock(move || fixed);
    NoaaClients::new(Arc::new(transport), ProvidersConfig::builtin())
}

struct Unreachable;

impl Upstream for Unreachable {
    fn get(&self, url: &str, _timeout: StdDuration) -> Result<UpstreamResponse, TransportError> {
        panic!("replay touched the network for {url}");
    }
}

fn jan_2024() -> TimeRange {
    TimeRange::new(
        Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap(),
        Utc.with_ymd_and_hms(2024, 1, 31, 23, 0, 0).unwrap(),
        Resolution::Hourly,
    )
    .unwrap()
}

#[test]
fn water_level_records_then_replays_identically() {
    let dir = tempfile::tempdir().unwrap();
    let recorded = clients(TransportMode::RecordThenReplay, dir.path(), Arc::new(SyntheticUpstream))
        .fetch_water_level("8443970", &jan_2024(), Datum::Msl, Interval::Hourly)
        .unwrap();
    let s = &recorded.data.series;
    assert_eq!(s.len(), 31 * 24);
    let max = s.iter_valid().map(|p| p.1).fold(f64::MIN, f64::max);
    assert_eq!(max, synthetic::BOSTON_2024_MAX);
    // Flagged points are excluded, so the masked count covers them.
    assert!(s.valid_count() < s.len());
    assert_eq!(recorded.data.station.name, "Boston");
    assert_eq!(recorded.provenance.retrieved_at, Utc.with_ymd_and_hms(2025, 6, 15, 12, 0, 0).unwrap());

    let replayed = clients(TransportMode::Replay, dir.path(), Arc::new(Unreachable))
        .fetch_water_level("8443970", &jan_2024(), Datum::Msl, Interval::Hourly)
        .unwrap();
    assert_eq!(recorded, replayed);
}

#[test]
fn replay_miss_is_a_provider_error() {
    let dir = tempfile::tempdir().unwrap();
    let err = clients(TransportMode::Replay, dir.path(), Arc::new(Unreachable))
        .fetch_water_level("8443970", &jan_2024(), Datum::Msl, Interval::Hourly)
        .unwrap_err();
    assert!(matches!(err, ClientError::ProviderError { .. }), "{err:?}");
}

#[test]
fn unknown_station_is_reported_by_the_provider() {
    let dir = tempfile::tempdir().unwrap();
    let err = clients(TransportMode::RecordThenReplay, dir.path(), Arc::new(SyntheticUpstream))
        .fetch_water_level("1234567", &jan_2024(), Datum::Msl, Interval::Hourly)
        .unwrap_err();
    assert_eq!(err.kind(), "StationUnknown", "{err:?}");
}

#[test]
fn six_minute_requests_are_split_into_provider_windows() {
    let dir = tempfile::tempdir().unwrap();
    let tr = TimeRange::new(
        Utc.with_ymd_and_hms(2020, 5, 1, 0, 0, 0).unwrap(),
        Utc.with_ymd_and_hms(2020, 7, 15, 0, 0, 0).unwrap(),
        Resolution::SixMinute,
    )
    .unwrap();
    let c = clients(TransportMode::RecordThenReplay, dir.path(), Arc::new(SyntheticUpstream));
    let got = c.fetch_water_level("8723214", &tr, Datum::Msl, Interval::SixMinute).unwrap();
    assert_eq!(got.data.series.len(), 75 * 240 + 1);
    assert!(c.transport().store().len() >= 3);
}

#[test]
fn cora_picks_a_wet_node_within_radius() {
    let dir = tempfile::tempdir().unwrap();
    let tr = TimeRange::new(
        Utc.with_ymd_and_hms(1993, 6, 1, 0, 0, 0).unwrap(),
        Utc.with_ymd_and_hms(1993, 6, 2, 0, 0, 0).unwrap(),
        Resolution::Hourly,
    )
    .unwrap();
    let p = GeoPoint::new(42.3539, -71.0503).unwrap();
    let got = clients(TransportMode::RecordThenReplay, dir.path(), Arc::new(SyntheticUpstream))
        .fetch_cora_series("Boston", p, &tr)
        .unwrap();
    assert!(got.data.node.distance_km <= 50.0);
    // The synthetic mesh is dry west of the request point.
    assert!(got.data.node.lon >= -71.0503 - 0.005 - 1e-9);
    assert_eq!(got.data.series.len(), 25);
}

#[test]
fn crw_grid_is_unpacked_and_land_masked() {
    let dir = tempfile::tempdir().unwrap();
    let bbox = BBox::new(28.0, 30.0, -90.0, -88.0).unwrap();
    let got = clients(TransportMode::RecordThenReplay, dir.path(), Arc::new(SyntheticUpstream))
        .fetch_sst(&bbox, "test box", NaiveDate::from_ymd_opt(2019, 12, 31).unwrap())
        .unwrap();
    let g = &got.data;
    assert_eq!((g.lats.len(), g.lons.len()), (40, 40));
    assert!(g.lats.windows(2).all(|w| w[0] < w[1]), "rows are ascending after parsing");
    let min = g.values.iter().flatten().fold(f64::MAX, |a, &b| a.min(b));
    assert!((min - synthetic::GULF_SST_MIN).abs() < 1e-9, "{min}");
    for (r, &lat) in g.lats.iter().enumerate() {
        for (c, &lon) in g.lons.iter().enumerate() {
            assert_eq!(g.get(r, c).is_none(), synthetic::gulf_land(lat, lon), "({lat}, {lon})");
        }
    }
}

#[test]
fn fixture_index_records_the_origin() {
    let dir = tempfile::tempdir().unwrap();
    let c = clients(TransportMode::RecordThenReplay, dir.path(), Arc::new(SyntheticUpstream));
    c.fetch_water_level("8443970", &jan_2024(), Datum::Msl, Interval::Hourly).unwrap();
    let index: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("index.json")).unwrap()).unwrap();
    let records = index["records"].as_object().unwrap();
    assert!(!records.is_empty());
    assert!(records.values().all(|r| r["origin"] == "synthetic"));
}
