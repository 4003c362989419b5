//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits non-zero
//! if any criterion fails. Runs offline against the bundled fixtures.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use axum::body::{to_bytes, Body};
use axum::http::{header, Request};
use axum::Router;
use common::oracles::*;
use proptest::strategy::Strategy;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use regex::Regex;
use seagrounded::dispatch::FunctionCall;
use seagrounded::orchestrator::{check_grounding, ChatError, ChatModel, ChatReply, Mode};
use seagrounded::service::router;
use serde_json::{json, Value};

const FIG1: &str = "What is the maximum water level in Boston in 2024?";
const SST: &str = "What was the SST in the Gulf of Mexico in 2019?";
const COMPARE: &str = "What is the sea level in Boston and Virginia Key in 2022?";
const CORA: &str = "Show Boston's water level from CORA reanalysis in June 1993.";
const HOURLY: &str = "What was the water level in Boston in May 2020?";

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn num(v: &Value, key: &str) -> Result<f64, String> {
    v[key].as_f64().ok_or_else(|| format!("json_data.{key} missing"))
}

fn fig1() -> Outcome {
    let started = Instant::now();
    let (engine, _dir) = common::replay_engine();
    let a = engine.query(FIG1, Mode::Deterministic).map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    let max = num(&a.data, "max")?;
    ensure!((max - 2.79).abs() <= 0.01, "max {max}");
    ensure!(a.data["datum"] == "MSL", "datum {}", a.data["datum"]);
    let p = a.provenance.first().ok_or("no provenance")?;
    ensure!(p.station_or_grid.contains("8443970"), "provenance station '{}'", p.station_or_grid);
    ensure!(p.dataset_id.starts_with("coops:"), "provenance dataset '{}'", p.dataset_id);
    ensure!(a.text.contains("2.79 m"), "text does not state 2.79 m");
    ensure!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}");
    Ok(format!(
        "max {max} m MSL, {} / {}, {:.2} s",
        p.station_or_grid,
        p.dataset_id,
        elapsed.as_secs_f64()
    ))
}

fn colorbar(svg: &str, class: &str) -> Result<f64, String> {
    let re = Regex::new(&format!(r#"class="{class}"[^>]*>(-?[0-9]+\.[0-9]+)"#)).unwrap();
    re.captures(svg)
        .and_then(|c| c[1].parse().ok())
        .ok_or_else(|| format!("no {class} label in map"))
}

fn sst() -> Outcome {
    let (engine, _dir) = common::replay_engine();
    let a = engine.query(SST, Mode::Deterministic).map_err(|e| e.to_string())?;
    ensure!(a.data["date"] == "2019-12-31", "date {}", a.data["date"]);
    let (min, max) = (num(&a.data, "min")?, num(&a.data, "max")?);
    ensure!((min - 13.04).abs() <= 0.05, "min {min}");
    ensure!((max - 28.34).abs() <= 0.05, "max {max}");
    let fig = a.figures.first().ok_or("no map figure")?;
    let svg = String::from_utf8(engine.figures.get(&fig.id).ok_or("figure not stored")?).unwrap();
    let (lo, hi) = (colorbar(&svg, "cbar-min")?, colorbar(&svg, "cbar-max")?);
    ensure!((lo - min).abs() < 0.005 && (hi - max).abs() < 0.005, "colorbar {lo}..{hi} vs data {min}..{max}");
    Ok(format!("min {min:.2} °C, max {max:.2} °C, colorbar {lo}..{hi}"))
}

fn compare_shape() -> Outcome {
    let (engine, _dir) = common::replay_engine();
    let a = engine.query(COMPARE, Mode::Deterministic).map_err(|e| e.to_string())?;
    let data = a.data.as_object().ok_or("data is not an object")?;
    for loc in ["Boston", "Virginia Key"] {
        let entry = data.get(loc).ok_or(format!("no entry keyed '{loc}'"))?;
        let n = entry["series"]["values"].as_array().map(Vec::len).unwrap_or(0);
        ensure!(n == 12, "{loc}: {n} points");
        ensure!(entry["count"] == 12, "{loc}: count {}", entry["count"]);
    }
    ensure!(a.provenance.len() == 2, "{} provenance records", a.provenance.len());
    ensure!(a.figures.len() == 1, "{} figures", a.figures.len());
    Ok("two 12-point series keyed by location, 2 provenance records, 1 figure".into())
}

fn cora_shape() -> Outcome {
    let (engine, _dir) = common::replay_engine();
    let a = engine.query(CORA, Mode::Deterministic).map_err(|e| e.to_string())?;
    for k in ["min", "max", "mean", "std"] {
        num(&a.data, k)?;
    }
    let n = a.data["series"]["values"].as_array().map(Vec::len).unwrap_or(0);
    ensure!(n > 0, "empty series");
    let d = num(&a.data["node"], "distance_km")?;
    ensure!(d <= 50.0, "node {d} km away");
    let p = a.provenance.first().ok_or("no provenance")?;
    let id = a.data["node"]["id"].to_string();
    ensure!(p.station_or_grid.contains(&id), "provenance '{}' lacks node {id}", p.station_or_grid);
    Ok(format!("{n} hourly values, node {id} at {d:.2} km"))
}

fn run_property<S: Strategy>(cases: u32, strategy: S, case: impl Fn(S::Value) -> Check) -> Result<(), String> {
    let mut runner = TestRunner::new_with_rng(
        Config {
            cases,
            failure_persistence: None,
            ..Config::default()
        },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    );
    runner
        .run(&strategy, |v| case(v).map_err(TestCaseError::fail))
        .map_err(|e| e.to_string())
}

fn properties() -> Outcome {
    run_property(1000, summary_inputs(), summary_case).map_err(|e| format!("summary_stats: {e}"))?;
    run_property(300, trend_inputs(), trend_case).map_err(|e| format!("linear_trend: {e}"))?;
    run_property(100, node_inputs(), nearest_case).map_err(|e| format!("nearest_node: {e}"))?;
    run_property(100, search_inputs(), search_case).map_err(|e| format!("search: {e}"))?;
    run_property(300, threshold_inputs(), threshold_case).map_err(|e| format!("threshold_mask: {e}"))?;
    Ok("summary 1000, trend 300, nearest_node 100, search 100, threshold 300 cases".into())
}

struct Perturbing;

impl ChatModel for Perturbing {
    fn complete(&self, _messages: &[Value], _tools: &[Value]) -> Result<ChatReply, ChatError> {
        Ok(ChatReply {
            content: Some("The highest water level at Boston in 2024 was 2.97 m above MSL.".into()),
            tool_calls: vec![],
        })
    }
}

fn grounding() -> Outcome {
    let (engine, _dir) = common::replay_engine();
    let engine = engine.map_orchestrator(|o| o.with_model(Arc::new(Perturbing)));
    let a = engine.query(FIG1, Mode::ModelBacked).map_err(|e| e.to_string())?;
    let fallback = a.synthesis.fallback.clone().unwrap_or_default();
    ensure!(fallback.starts_with("SynthesisNumericMismatch"), "fallback '{fallback}'");
    let det = engine.query(FIG1, Mode::Deterministic).map_err(|e| e.to_string())?;
    ensure!(a.text == det.text, "fallback text differs from the template answer");
    check_grounding(&a.text, &a.data).map_err(|lit| format!("final text states {lit}, not in json_data"))?;
    Ok(fallback)
}

fn post(rt: &tokio::runtime::Runtime, app: &Router, body: Vec<u8>) -> (u16, Vec<u8>) {
    use tower::ServiceExt;
    rt.block_on(async {
        let req = Request::post("/api/query")
            .header(header::CONTENT_TYPE, "application/json")
            .body(Body::from(body))
            .unwrap();
        let resp = app.clone().oneshot(req).await.unwrap();
        let status = resp.status().as_u16();
        (status, to_bytes(resp.into_body(), usize::MAX).await.unwrap().to_vec())
    })
}

fn svg_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "svg"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect()
}

fn determinism() -> Outcome {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap();
    let run = || {
        let (engine, dir) = common::replay_engine();
        let app = router(Arc::new(engine));
        let bodies: Vec<(u16, Vec<u8>)> = [COMPARE, HOURLY, CORA, SST]
            .iter()
            .map(|q| post(&rt, &app, json!({"text": q}).to_string().into_bytes()))
            .collect();
        (bodies, svg_files(dir.path()))
    };
    let (a, svg_a) = run();
    let (b, svg_b) = run();
    for (i, ((sa, ba), (sb, bb))) in a.iter().zip(&b).enumerate() {
        ensure!(*sa == 200 && *sb == 200, "query {i}: status {sa}/{sb}");
        ensure!(ba == bb, "query {i}: response bytes differ");
    }
    ensure!(!svg_a.is_empty(), "no figures written");
    ensure!(svg_a == svg_b, "SVG files differ between runs");
    Ok(format!("4 responses and {} SVG files identical across runs", svg_a.len()))
}

/// A rejection is structured when it is JSON naming an error kind plus a
/// parameter or a diagnostic.
fn structured_rejection(status: u16, body: &[u8]) -> Result<(), String> {
    let v: Value = serde_json::from_slice(body).map_err(|_| format!("{status}: body is not JSON"))?;
    if status == 200 {
        return if v["text"].is_string() { Ok(()) } else { Err("200 without answer text".into()) };
    }
    ensure!(status != 500, "500: {v}");
    ensure!(v["error"].is_string(), "{status}: no error kind: {v}");
    let named = v["param"].is_string()
        || v["diagnostic"].is_string()
        || v["violations"].as_array().is_some_and(|vs| !vs.is_empty() && vs.iter().all(|x| x["param"].is_string()))
        || v["function"].is_string();
    ensure!(named, "{status}: rejection names no parameter or diagnostic: {v}");
    Ok(())
}

fn fuzz_text() -> impl Strategy<Value = String> {
    use proptest::prelude::*;
    let place = prop::sample::select(vec![
        "Boston", "Virginia Key", "the Gulf of Mexico", "Atlantis", "Boston and Virginia Key", "42.35,-71.05", "",
    ]);
    let what = prop::sample::select(vec![
        "maximum water level", "sea level", "SST", "CORA water level", "minimum", "trend of sea level", "", "tide",
    ]);
    let when = prop::sample::select(vec![
        "in 2024", "in May 2020", "in June 1993", "on 2019-12-31", "in 1850", "from 2024 to 2020", "last week",
        "in 2099", "", "on 2019-02-30",
    ]);
    prop_oneof![
        (what, place, when).prop_map(|(w, p, t)| format!("What is the {w} in {p} {t}?")),
        "\\PC{0,80}",
    ]
}

fn fuzz_body() -> impl Strategy<Value = Vec<u8>> {
    use proptest::prelude::*;
    let value = prop_oneof![
        Just(Value::Null),
        any::<bool>().prop_map(Value::from),
        any::<i64>().prop_map(Value::from),
        "\\PC{0,20}".prop_map(Value::from),
    ];
    prop_oneof![
        fuzz_text().prop_map(|t| json!({"text": t}).to_string().into_bytes()),
        (fuzz_text(), prop::sample::select(vec!["deterministic", "model_backed", "bogus"]))
            .prop_map(|(t, m)| json!({"text": t, "mode": m}).to_string().into_bytes()),
        prop::collection::btree_map("[a-z]{1,6}", value, 0..4)
            .prop_map(|m| serde_json::to_vec(&m).unwrap()),
        prop::collection::vec(any::<u8>(), 0..64),
    ]
}

fn fuzz_call(names: Vec<String>) -> impl Strategy<Value = (String, Value)> {
    use proptest::prelude::*;
    let leaf = prop_oneof![
        Just(Value::Null),
        any::<bool>().prop_map(Value::from),
        (-1e6f64..1e6).prop_map(Value::from),
        any::<i32>().prop_map(Value::from),
        prop::sample::select(vec![
            "Boston", "8443970", "2024-01-01", "2024-13-45", "May 2020", "MLLW", "hourly", "6min", "gulf of mexico",
            "42.35,-71.05", "25,30,-90,-80", "", "2019-12-31", "1970-01-01", "yesterday",
        ])
        .prop_map(Value::from),
        "\\PC{0,12}".prop_map(Value::from),
    ];
    let value = leaf.prop_recursive(2, 8, 4, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..4).prop_map(Value::from),
            prop::collection::btree_map(prop::sample::select(vec!["lat", "lon", "name", "x"]), inner, 0..3)
                .prop_map(|m| Value::Object(m.into_iter().map(|(k, v)| (k.to_string(), v)).collect())),
        ]
    });
    let key = prop::sample::select(vec![
        "station", "location", "region", "begin", "end", "date", "datum", "interval", "query", "k", "bogus",
    ]);
    let name = prop::sample::select([names, vec!["no_such_function".into()]].concat());
    let random = (name, prop::collection::btree_map(key.clone(), value.clone(), 0..6))
        .prop_map(|(n, m)| (n, Value::Object(m.into_iter().map(|(k, v)| (k.to_string(), v)).collect())));
    // Valid calls with one argument replaced, removed or added.
    let templates = vec![
        ("get_water_level", json!({"station": "Boston", "begin": "2024-01-01", "end": "2024-12-31"})),
        ("get_monthly_mean_sea_level", json!({"station": "Boston", "begin": "2022-01-01", "end": "2022-12-31"})),
        ("get_cora_series", json!({"location": "Boston", "begin": "1993-06-01", "end": "1993-06-30"})),
        ("get_sst", json!({"region": "gulf of mexico", "date": "2019-12-31"})),
        ("search_documents", json!({"query": "sea level trends"})),
    ];
    let mutated = (prop::sample::select(templates), key, prop::option::of(value), any::<bool>()).prop_map(
        |((name, mut args), k, v, keep)| {
            let m = args.as_object_mut().unwrap();
            match (v, keep) {
                (Some(v), _) => {
                    m.insert(k.to_string(), v);
                }
                (None, false) => {
                    m.remove(k);
                }
                (None, true) => {}
            }
            (name.to_string(), args)
        },
    );
    prop_oneof![random, mutated]
}

fn robustness() -> Outcome {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap();
    let (engine, _dir) = common::replay_engine();
    let engine = Arc::new(engine);
    let app = router(engine.clone());
    let statuses = Mutex::new(BTreeMap::<u16, usize>::new());
    run_property(400, fuzz_body(), |body| {
        let (status, resp) = post(&rt, &app, body.clone());
        *statuses.lock().unwrap().entry(status).or_default() += 1;
        structured_rejection(status, &resp).map_err(|e| format!("body {}: {e}", String::from_utf8_lossy(&body)))
    })
    .map_err(|e| format!("/api/query: {e}"))?;

    let names: Vec<String> = engine.registry().names().into_iter().map(String::from).collect();
    let kinds = Mutex::new(BTreeMap::<&'static str, usize>::new());
    run_property(600, fuzz_call(names), |(name, args)| {
        let call = FunctionCall::new(&name, args.clone());
        let result = engine.registry().dispatch(&call);
        *kinds.lock().unwrap().entry(result.as_ref().map_or_else(|e| e.kind(), |_| "Ok")).or_default() += 1;
        match result {
            Ok(_) => Ok(()),
            Err(e) => {
                let v = e.to_json();
                ensure!(e.kind() != "Internal", "{name}({args}) panicked: {v}");
                structured_rejection(422, v.to_string().as_bytes()).map_err(|m| format!("{name}({args}): {m}"))
            }
        }
    })
    .map_err(|e| format!("FunctionCall: {e}"))?;
    Ok(format!(
        "query statuses {:?}; call outcomes {:?}",
        statuses.into_inner().unwrap(),
        kinds.into_inner().unwrap()
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("fig1_boston_2024_max", fig1),
        ("sst_gulf_2019_12_31", sst),
        ("compare_shape_boston_virginia_key_2022", compare_shape),
        ("cora_shape_boston_june_1993", cora_shape),
        ("property_suite", properties),
        ("grounding_guard", grounding),
        ("determinism_replay", determinism),
        ("robustness_fuzz", robustness),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
