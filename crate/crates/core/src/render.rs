//! Deterministic SVG figures and the content-addressed figure store.
//!
//! Nothing time- or run-dependent is written into a figure, so identical
//! inputs always hash to the same file.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analysis::{grid_summary, AnalysisError};
use crate::clients::transport::write_atomic;
use crate::model::{FigureKind, FigureRef, GridSlice, Series, SummaryStats, Unit};

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 500.0;
const MARGIN_LEFT: f64 = 80.0;
const MARGIN_RIGHT: f64 = 30.0;
const MARGIN_TOP: f64 = 60.0;
const MARGIN_BOTTOM: f64 = 70.0;
const TRACE_COLORS: [&str; 2] = ["#1f77b4", "#d62728"];
const MASK_COLOR: &str = "#d9d9d9";
/// Longest grid side drawn cell-for-cell; larger grids are block-averaged.
pub const MAX_MAP_CELLS_PER_SIDE: usize = 160;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("nothing to plot: {0}")]
    EmptySeries(String),
    #[error("grid is fully masked")]
    FullyMasked,
    #[error("cannot plot {0} traces; expected 1 or 2")]
    TraceCount(usize),
    #[error("traces mix units {0} and {1}")]
    UnitMismatch(String, String),
    #[error("figure store: {0}")]
    Store(String),
}

impl From<AnalysisError> for RenderError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::FullyMasked => RenderError::FullyMasked,
            other => RenderError::EmptySeries(other.to_string()),
        }
    }
}

/// Fixed two-decimal formatting used for every number shown to users.
pub fn fixed2(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".to_string()
    } else {
        s
    }
}

fn esc(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn unit_label(u: Unit) -> String {
    match u {
        Unit::Dimensionless => String::new(),
        other => format!(" {}", other.symbol()),
    }
}

fn header(svg: &mut String, title: &str) {
    let _ = write!(
        svg,
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" \
         width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text class=\"title\" x=\"{}\" y=\"28\" text-anchor=\"middle\" font-size=\"16\">{}</text>\n",
        WIDTH / 2.0,
        esc(title)
    );
}

/// Evenly spaced tick values covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Pads a value range; a degenerate range is widened by ±0.5 unit.
fn padded_range(lo: f64, hi: f64) -> (f64, f64) {
    if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        let pad = (hi - lo) * 0.05;
        (lo - pad, hi + pad)
    }
}

fn time_format(span_secs: i64) -> &'static str {
    if span_secs <= 3 * 86_400 {
        "%m-%d %H:%M"
    } else if span_secs <= 3 * 366 * 86_400 {
        "%Y-%m-%d"
    } else {
        "%Y-%m"
    }
}

fn stamp(t: DateTime<Utc>) -> String {
    t.format("%Y-%m-%d %H:%M UTC").to_string()
}

/// One line on a time-series plot.
#[derive(Debug, Clone, Copy)]
pub struct Trace<'a> {
    pub label: &'a str,
    pub series: &'a Series,
    pub stats: &'a SummaryStats,
}

/// Annotated time-series plot of one or two traces sharing a unit.
pub fn timeseries_svg(traces: &[Trace<'_>], title: &str, y_label: &str) -> Result<String, RenderError> {
    if traces.is_empty() || traces.len() > 2 {
        return Err(RenderError::TraceCount(traces.len()));
    }
    for t in traces {
        if t.series.valid_count() == 0 {
            return Err(RenderError::EmptySeries(t.label.to_string()));
        }
    }
    let unit = traces[0].series.unit;
    if let Some(t) = traces.iter().find(|t| t.series.unit != unit) {
        return Err(RenderError::UnitMismatch(unit.code().into(), t.series.unit.code().into()));
    }
    let t0 = traces.iter().map(|t| t.series.timestamps[0]).min().unwrap();
    let t1 = traces.iter().map(|t| *t.series.timestamps.last().unwrap()).max().unwrap();
    let vmin = traces.iter().map(|t| t.stats.min).fold(f64::INFINITY, f64::min);
    let vmax = traces.iter().map(|t| t.stats.max).fold(f64::NEG_INFINITY, f64::max);
    let (ylo, yhi) = padded_range(vmin, vmax);
    let span = (t1 - t0).num_seconds().max(1) as f64;
    let (pw, ph) = (WIDTH - MARGIN_LEFT - MARGIN_RIGHT, HEIGHT - MARGIN_TOP - MARGIN_BOTTOM);
    let x = |t: DateTime<Utc>| MARGIN_LEFT + (t - t0).num_seconds() as f64 / span * pw;
    let y = |v: f64| MARGIN_TOP + (yhi - v) / (yhi - ylo) * ph;
    let ul = unit_label(unit);

    let mut svg = String::new();
    header(&mut svg, title);
    let _ = writeln!(
        svg,
        "<rect class=\"plot-area\" x=\"{MARGIN_LEFT}\" y=\"{MARGIN_TOP}\" width=\"{pw}\" height=\"{ph}\" fill=\"none\" stroke=\"#333\"/>"
    );
    for v in ticks(ylo, yhi, 6) {
        let yy = y(v);
        let _ = writeln!(
            svg,
            "<line x1=\"{:.2}\" y1=\"{yy:.2}\" x2=\"{:.2}\" y2=\"{yy:.2}\" stroke=\"#eee\"/>\
             <text class=\"ytick\" x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>",
            MARGIN_LEFT,
            MARGIN_LEFT + pw,
            MARGIN_LEFT - 6.0,
            yy + 4.0,
            fixed2(v)
        );
    }
    let fmt = time_format((t1 - t0).num_seconds());
    for i in 0..6 {
        let t = t0 + chrono::Duration::seconds((span * i as f64 / 5.0).round() as i64);
        let xx = x(t);
        let _ = writeln!(
            svg,
            "<text class=\"xtick\" x=\"{xx:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
            MARGIN_TOP + ph + 18.0,
            t.format(fmt)
        );
    }
    let _ = writeln!(
        svg,
        "<text class=\"xlabel\" x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">Time (UTC)</text>\n\
         <text class=\"ylabel\" x=\"18\" y=\"{:.2}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {:.2})\">{}</text>",
        MARGIN_LEFT + pw / 2.0,
        HEIGHT - 28.0,
        MARGIN_TOP + ph / 2.0,
        MARGIN_TOP + ph / 2.0,
        esc(y_label)
    );

    for (k, t) in traces.iter().enumerate() {
        let color = TRACE_COLORS[k];
        // Missing values break the line.
        let mut runs: Vec<Vec<String>> = vec![Vec::new()];
        for (ts, v) in t.series.timestamps.iter().zip(&t.series.values) {
            match v {
                Some(v) => runs.last_mut().unwrap().push(format!("{:.2},{:.2}", x(*ts), y(*v))),
                None if !runs.last().unwrap().is_empty() => runs.push(Vec::new()),
                None => {}
            }
        }
        for run in runs.iter().filter(|r| !r.is_empty()) {
            let _ = writeln!(
                svg,
                "<polyline class=\"trace\" data-trace=\"{k}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.2\" points=\"{}\"/>",
                run.join(" ")
            );
        }
        let s = t.stats;
        let mean_y = y(s.mean);
        let _ = writeln!(
            svg,
            "<line class=\"mean-line\" data-trace=\"{k}\" x1=\"{MARGIN_LEFT}\" y1=\"{mean_y:.2}\" x2=\"{:.2}\" y2=\"{mean_y:.2}\" \
             stroke=\"{color}\" stroke-dasharray=\"6 4\"/>",
            MARGIN_LEFT + pw
        );
        for (class, label, tt, v) in [("stat-max", "max", s.argmax_time, s.max), ("stat-min", "min", s.argmin_time, s.min)] {
            let (cx, cy) = (x(tt), y(v));
            let anchor = if cx > MARGIN_LEFT + pw * 0.7 { "end" } else { "start" };
            let dy = if class == "stat-max" { -8.0 } else { 16.0 };
            let _ = writeln!(
                svg,
                "<circle cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"4\" fill=\"{color}\"/>\
                 <text class=\"{class}\" data-trace=\"{k}\" x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"{anchor}\" fill=\"{color}\">{label} {}{} at {}</text>",
                cx,
                cy + dy,
                fixed2(v),
                esc(&ul),
                stamp(tt)
            );
        }
        let _ = writeln!(
            svg,
            "<text class=\"stat-mean\" data-trace=\"{k}\" x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\" fill=\"{color}\">mean {}{}</text>",
            MARGIN_LEFT + pw - 4.0,
            mean_y - 4.0,
            fixed2(s.mean),
            esc(&ul)
        );
        let ly = MARGIN_TOP - 14.0;
        let lx = MARGIN_LEFT + 10.0 + k as f64 * 300.0;
        let _ = writeln!(
            svg,
            "<line x1=\"{lx:.2}\" y1=\"{ly:.2}\" x2=\"{:.2}\" y2=\"{ly:.2}\" stroke=\"{color}\" stroke-width=\"2\"/>\
             <text class=\"legend\" data-trace=\"{k}\" x=\"{:.2}\" y=\"{:.2}\">{}</text>",
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            esc(t.label)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Colormap {
    #[default]
    Thermal,
    Viridis,
}

impl Colormap {
    fn stops(self) -> &'static [(u8, u8, u8)] {
        match self {
            Colormap::Thermal => &[(4, 35, 51), (23, 84, 169), (91, 134, 171), (166, 180, 160), (233, 191, 96), (226, 105, 48), (144, 20, 37)],
            Colormap::Viridis => &[(68, 1, 84), (59, 82, 139), (33, 145, 140), (94, 201, 98), (253, 231, 37)],
        }
    }

    /// Color at `f` in [0, 1].
    pub fn color(self, f: f64) -> String {
        let stops = self.stops();
        let f = if f.is_finite() { f.clamp(0.0, 1.0) } else { 0.0 };
        let pos = f * (stops.len() - 1) as f64;
        let i = (pos.floor() as usize).min(stops.len() - 2);
        let w = pos - i as f64;
        let mix = |a: u8, b: u8| (a as f64 + (b as f64 - a as f64) * w).round() as u8;
        let (a, b) = (stops[i], stops[i + 1]);
        format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
    }
}

/// Averages `factor`×`factor` blocks of unmasked cells.
fn block_average(g: &GridSlice, factor: usize) -> (Vec<f64>, Vec<f64>, Vec<Option<f64>>) {
    if factor <= 1 {
        return (g.lats.clone(), g.lons.clone(), g.values.clone());
    }
    let (ny, nx) = (g.lats.len(), g.lons.len());
    let centers = |axis: &[f64]| -> Vec<f64> {
        axis.chunks(factor).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect()
    };
    let (lats, lons) = (centers(&g.lats), centers(&g.lons));
    let mut values = Vec::with_capacity(lats.len() * lons.len());
    for br in 0..lats.len() {
        for bc in 0..lons.len() {
            let mut sum = crate::analysis::CompensatedSum::default();
            let mut n = 0usize;
            for r in br * factor..((br + 1) * factor).min(ny) {
                for c in bc * factor..((bc + 1) * factor).min(nx) {
                    if let Some(v) = g.values[r * nx + c] {
                        sum.add(v);
                        n += 1;
                    }
                }
            }
            values.push((n > 0).then(|| sum.total() / n as f64));
        }
    }
    (lats, lons, values)
}

/// Cell edges from centers: midpoints, extrapolated at the ends.
fn edges(axis: &[f64]) -> Vec<f64> {
    if axis.len() == 1 {
        return vec![axis[0] - 0.5, axis[0] + 0.5];
    }
    let mut out = Vec::with_capacity(axis.len() + 1);
    out.push(axis[0] - (axis[1] - axis[0]) / 2.0);
    for w in axis.windows(2) {
        out.push((w[0] + w[1]) / 2.0);
    }
    let n = axis.len();
    out.push(axis[n - 1] + (axis[n - 1] - axis[n - 2]) / 2.0);
    out
}

/// Color map of a grid with coordinate axes and a colorbar spanning the data range.
pub fn map_svg(g: &GridSlice, colormap: Colormap, title: &str) -> Result<String, RenderError> {
    let summary = grid_summary(g)?;
    let (lo, hi) = if summary.max - summary.min < 1e-12 {
        (summary.min - 0.5, summary.max + 0.5)
    } else {
        (summary.min, summary.max)
    };
    let side = g.lats.len().max(g.lons.len());
    let factor = side.div_ceil(MAX_MAP_CELLS_PER_SIDE).max(1);
    let (lats, lons, values) = block_average(g, factor);
    let (lat_e, lon_e) = (edges(&lats), edges(&lons));
    let cbar_w = 90.0;
    let (pw, ph) = (WIDTH - MARGIN_LEFT - MARGIN_RIGHT - cbar_w, HEIGHT - MARGIN_TOP - MARGIN_BOTTOM);
    let (lat0, lat1) = (lat_e[0], *lat_e.last().unwrap());
    let (lon0, lon1) = (lon_e[0], *lon_e.last().unwrap());
    let x = |lon: f64| MARGIN_LEFT + (lon - lon0) / (lon1 - lon0) * pw;
    let y = |lat: f64| MARGIN_TOP + (lat1 - lat) / (lat1 - lat0) * ph;
    let ul = unit_label(g.unit);

    let mut svg = String::new();
    header(&mut svg, title);
    let _ = writeln!(
        svg,
        "<defs><pattern id=\"mask\" width=\"6\" height=\"6\" patternUnits=\"userSpaceOnUse\">\
         <rect width=\"6\" height=\"6\" fill=\"{MASK_COLOR}\"/><path d=\"M0,6 L6,0\" stroke=\"#aaa\" stroke-width=\"1\"/></pattern></defs>"
    );
    if factor > 1 {
        let _ = writeln!(
            svg,
            "<!-- {}x{} cells drawn as {}x{} block means -->",
            g.lats.len(),
            g.lons.len(),
            lats.len(),
            lons.len()
        );
    }
    svg.push_str("<g class=\"cells\" shape-rendering=\"crispEdges\">\n");
    for (r, _) in lats.iter().enumerate() {
        for (c, _) in lons.iter().enumerate() {
            let (x0, x1) = (x(lon_e[c]), x(lon_e[c + 1]));
            let (y0, y1) = (y(lat_e[r + 1]), y(lat_e[r]));
            let (class, fill) = match values[r * lons.len() + c] {
                Some(v) => ("cell", colormap.color((v - lo) / (hi - lo))),
                None => ("cell masked", "url(#mask)".to_string()),
            };
            let _ = writeln!(
                svg,
                "<rect class=\"{class}\" x=\"{x0:.2}\" y=\"{y0:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{fill}\"/>",
                x1 - x0,
                y1 - y0
            );
        }
    }
    svg.push_str("</g>\n");
    let _ = writeln!(
        svg,
        "<rect class=\"plot-area\" x=\"{MARGIN_LEFT}\" y=\"{MARGIN_TOP}\" width=\"{pw:.2}\" height=\"{ph:.2}\" fill=\"none\" stroke=\"#333\"/>"
    );
    for v in ticks(lat0, lat1, 5) {
        let _ = writeln!(
            svg,
            "<text class=\"ytick\" x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{}°N</text>",
            MARGIN_LEFT - 6.0,
            y(v) + 4.0,
            fixed2(v)
        );
    }
    for v in ticks(lon0, lon1, 5) {
        let _ = writeln!(
            svg,
            "<text class=\"xtick\" x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}°E</text>",
            x(v),
            MARGIN_TOP + ph + 18.0,
            fixed2(v)
        );
    }
    let _ = writeln!(
        svg,
        "<text class=\"xlabel\" x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">Longitude</text>\n\
         <text class=\"ylabel\" x=\"18\" y=\"{:.2}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {:.2})\">Latitude</text>",
        MARGIN_LEFT + pw / 2.0,
        HEIGHT - 28.0,
        MARGIN_TOP + ph / 2.0,
        MARGIN_TOP + ph / 2.0
    );

    let bx = MARGIN_LEFT + pw + 25.0;
    let steps = 50;
    svg.push_str("<g class=\"colorbar\">\n");
    for i in 0..steps {
        let f = 1.0 - (i as f64 + 0.5) / steps as f64;
        let _ = writeln!(
            svg,
            "<rect x=\"{bx:.2}\" y=\"{:.2}\" width=\"18\" height=\"{:.2}\" fill=\"{}\"/>",
            MARGIN_TOP + ph * i as f64 / steps as f64,
            ph / steps as f64 + 0.5,
            colormap.color(f)
        );
    }
    let _ = writeln!(
        svg,
        "<text class=\"cbar-max\" x=\"{:.2}\" y=\"{:.2}\">{}{}</text>\n\
         <text class=\"cbar-min\" x=\"{:.2}\" y=\"{:.2}\">{}{}</text>\n</g>",
        bx + 22.0,
        MARGIN_TOP + 10.0,
        fixed2(hi),
        esc(&ul),
        bx + 22.0,
        MARGIN_TOP + ph,
        fixed2(lo),
        esc(&ul)
    );
    let _ = writeln!(
        svg,
        "<text class=\"stat-note\" x=\"{MARGIN_LEFT}\" y=\"{:.2}\">min {}{} at ({}, {})  max {}{} at ({}, {})  masked cells: {}</text>",
        HEIGHT - 8.0,
        fixed2(summary.min),
        esc(&ul),
        fixed2(summary.argmin.lat),
        fixed2(summary.argmin.lon),
        fixed2(summary.max),
        esc(&ul),
        fixed2(summary.argmax.lat),
        fixed2(summary.argmax.lon),
        summary.masked
    );
    svg.push_str("</svg>\n");
    Ok(svg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ManifestEntry {
    alt_text: String,
    kind: FigureKind,
}

/// Append-only directory of `<sha256>.svg` files plus `manifest.json`.
#[derive(Debug)]
pub struct FigureStore {
    dir: PathBuf,
    url_prefix: String,
    manifest_lock: Mutex<()>,
}

impl FigureStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, RenderError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| RenderError::Store(format!("{}: {e}", dir.display())))?;
        Ok(FigureStore {
            dir,
            url_prefix: "/figures/".into(),
            manifest_lock: Mutex::new(()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn manifest_path(&self) -> PathBuf {
        self.dir.join("manifest.json")
    }

    fn read_manifest(&self) -> BTreeMap<String, ManifestEntry> {
        fs::read(self.manifest_path())
            .ok()
            .and_then(|b| serde_json::from_slice(&b).ok())
            .unwrap_or_default()
    }

    /// Stores `svg` under its content hash. Re-storing the same bytes is a no-op.
    pub fn put(&self, svg: &str, alt_text: &str, kind: FigureKind) -> Result<FigureRef, RenderError> {
        let id = hex::encode(Sha256::digest(svg.as_bytes()));
        let file = format!("{id}.svg");
        let path = self.dir.join(&file);
        let store_err = |e: std::io::Error| RenderError::Store(format!("{}: {e}", path.display()));
        if !path.exists() {
            write_atomic(&path, svg.as_bytes()).map_err(store_err)?;
        }
        {
            let _guard = self.manifest_lock.lock().unwrap_or_else(|p| p.into_inner());
            let mut manifest = self.read_manifest();
            if !manifest.contains_key(&id) {
                manifest.insert(
                    id.clone(),
                    ManifestEntry {
                        alt_text: alt_text.to_string(),
                        kind,
                    },
                );
                let bytes = serde_json::to_vec_pretty(&manifest).map_err(|e| RenderError::Store(e.to_string()))?;
                write_atomic(&self.manifest_path(), &bytes).map_err(store_err)?;
            }
        }
        Ok(FigureRef {
            url: format!("{}{file}", self.url_prefix),
            path: file,
            id,
            alt_text: alt_text.to_string(),
            kind,
        })
    }

    /// Bytes for a stored figure, by id or `<id>.svg`.
    pub fn get(&self, name: &str) -> Option<Vec<u8>> {
        let id = name.strip_suffix(".svg").unwrap_or(name);
        if id.len() != 64 || !id.bytes().all(|b| b.is_ascii_hexdigit() && !b.is_ascii_uppercase()) {
            return None;
        }
        fs::read(self.dir.join(format!("{id}.svg"))).ok()
    }

    pub fn alt_text(&self, id: &str) -> Option<String> {
        self.read_manifest().remove(id).map(|e| e.alt_text)
    }

    pub fn render_timeseries(&self, traces: &[Trace<'_>], title: &str, y_label: &str) -> Result<FigureRef, RenderError> {
        let svg = timeseries_svg(traces, title, y_label)?;
        let names: Vec<&str> = traces.iter().map(|t| t.label).collect();
        let unit = unit_label(traces[0].series.unit);
        let stats: Vec<String> = traces
            .iter()
            .map(|t| {
                format!(
                    "{}: max {}{unit}, min {}{unit}, mean {}{unit}",
                    t.label,
                    fixed2(t.stats.max),
                    fixed2(t.stats.min),
                    fixed2(t.stats.mean)
                )
            })
            .collect();
        let alt = format!("Time series of {} ({}). {}", title, names.join(" and "), stats.join("; "));
        self.put(&svg, &alt, FigureKind::TimeSeries)
    }

    pub fn render_map(&self, g: &GridSlice, colormap: Colormap, title: &str) -> Result<FigureRef, RenderError> {
        let svg = map_svg(g, colormap, title)?;
        let s = grid_summary(g)?;
        let ul = unit_label(g.unit);
        let alt = format!(
            "Map of {title}; colorbar from {}{ul} to {}{ul}; {} of {} cells masked",
            fixed2(s.min),
            fixed2(s.max),
            s.masked,
            g.values.len()
        );
        self.put(&svg, &alt, FigureKind::Map)
    }
}
