//! Coral Reef Watch daily sea surface temperature via an ERDDAP griddap subset.

use chrono::{DateTime, NaiveDate, Utc};

use super::netcdf::{NcError, NcFile};
use super::{fill_template, ClientError, Fetched, NoaaClients};
use crate::model::{BBox, DatasetFamily, GridSlice, Provenance, Resolution, TimeRange, Unit, Variable};

fn nc_err(what: &str, e: NcError) -> ClientError {
    ClientError::FormatError(format!("{what}: {e}"))
}

fn first_var<'a>(nc: &NcFile, names: &[&'a str]) -> Result<&'a str, ClientError> {
    names
        .iter()
        .copied()
        .find(|n| nc.has_var(n))
        .ok_or_else(|| ClientError::FormatError(format!("grid lacks any of {names:?}")))
}

/// Converts a value in the file's units to °C.
fn to_celsius(units: &str) -> Result<fn(f64) -> f64, ClientError> {
    let u = units.trim().to_ascii_lowercase();
    match u.as_str() {
        "degree_c" | "degrees_c" | "celsius" | "degc" | "c" | "degree_celsius" | "degrees_celsius" => Ok(|v| v),
        "k" | "kelvin" | "degree_k" | "degrees_k" => Ok(|v| v - 273.15),
        "degree_f" | "degrees_f" | "fahrenheit" | "degf" => Ok(|v| (v - 32.0) * 5.0 / 9.0),
        _ => Err(ClientError::FormatError(format!("unsupported SST units '{units}'"))),
    }
}

/// Decoded SST grid: ascending axes, values in °C, steps describing conversions.
pub fn parse_sst_grid(bytes: &[u8], variable: &str, bbox: &BBox) -> Result<(GridSlice, Vec<String>), ClientError> {
    let nc = NcFile::parse(bytes).map_err(|e| nc_err("CRW grid", e))?;
    let lat_name = first_var(&nc, &["latitude", "lat"])?;
    let lon_name = first_var(&nc, &["longitude", "lon"])?;
    let mut lats = nc.read_raw(lat_name).map_err(|e| nc_err("CRW latitude", e))?;
    let mut lons: Vec<f64> = nc
        .read_raw(lon_name)
        .map_err(|e| nc_err("CRW longitude", e))?
        .into_iter()
        .map(|l| if l > 180.0 { l - 360.0 } else { l })
        .collect();
    let raw = nc.read_masked(variable).map_err(|e| nc_err("CRW SST", e))?;
    let shape = nc.shape(variable).map_err(|e| nc_err("CRW SST", e))?;
    let (ny, nx) = (lats.len(), lons.len());
    let cells: usize = shape.iter().product();
    if cells != ny * nx || raw.len() != ny * nx {
        return Err(ClientError::FormatError(format!(
            "SST variable shape {shape:?} does not match a single {ny}x{nx} slice"
        )));
    }
    let dims = nc.dim_names(variable).map_err(|e| nc_err("CRW SST", e))?;
    let lat_first = dims.iter().position(|d| d.starts_with("lat")) < dims.iter().position(|d| d.starts_with("lon"));
    let time = if nc.has_var("time") {
        nc.read_times("time").map_err(|e| nc_err("CRW time", e))?.first().copied()
    } else {
        None
    };

    let mut steps = Vec::new();
    let convert = to_celsius(nc.var(variable).ok().and_then(|v| v.attr_str("units")).unwrap_or("degree_C"))?;
    let mut values: Vec<Option<f64>> = vec![None; ny * nx];
    for r in 0..ny {
        for c in 0..nx {
            let src = if lat_first { r * nx + c } else { c * ny + r };
            values[r * nx + c] = raw[src].map(convert);
        }
    }
    if convert(0.0) != 0.0 {
        steps.push("converted SST to degC".to_string());
    }
    if lats.len() > 1 && lats[0] > lats[lats.len() - 1] {
        lats.reverse();
        let rows: Vec<Vec<Option<f64>>> = values.chunks(nx).rev().map(<[_]>::to_vec).collect();
        values = rows.concat();
        steps.push("flipped descending latitude axis".to_string());
    }
    if lons.len() > 1 && lons[0] > lons[lons.len() - 1] {
        lons.reverse();
        for row in values.chunks_mut(nx) {
            row.reverse();
        }
        steps.push("flipped descending longitude axis".to_string());
    }

    // Clip to the requested box; servers round outward to the nearest cell.
    let eps = 1e-9;
    let rows: Vec<usize> = (0..ny)
        .filter(|&r| lats[r] >= bbox.lat_min - eps && lats[r] <= bbox.lat_max + eps)
        .collect();
    let cols: Vec<usize> = (0..nx)
        .filter(|&c| lons[c] >= bbox.lon_min - eps && lons[c] <= bbox.lon_max + eps)
        .collect();
    if rows.is_empty() || cols.is_empty() {
        return Err(ClientError::FormatError("SST grid does not intersect the requested box".into()));
    }
    let clipped: Vec<Option<f64>> = rows
        .iter()
        .flat_map(|&r| cols.iter().map(move |&c| (r, c)))
        .map(|(r, c)| values[r * nx + c])
        .collect();
    if rows.len() != ny || cols.len() != nx {
        steps.push(format!("clipped {ny}x{nx} grid to {}x{} cells inside the box", rows.len(), cols.len()));
    }
    let grid = GridSlice::new(
        rows.iter().map(|&r| lats[r]).collect(),
        cols.iter().map(|&c| lons[c]).collect(),
        clipped,
        Unit::Celsius,
        time.unwrap_or(DateTime::<Utc>::MIN_UTC),
        Variable::SeaSurfaceTemperature,
    )
    .map_err(|e| ClientError::FormatError(e.to_string()))?;
    Ok((grid, steps))
}

impl NoaaClients {
    pub fn sst_url(&self, bbox: &BBox, date: NaiveDate) -> String {
        fill_template(
            &self.config().crw.url_template,
            &[
                ("date", date.format("%Y-%m-%d").to_string()),
                ("lat_min", format!("{:.3}", bbox.lat_min)),
                ("lat_max", format!("{:.3}", bbox.lat_max)),
                ("lon_min", format!("{:.3}", bbox.lon_min)),
                ("lon_max", format!("{:.3}", bbox.lon_max)),
            ],
        )
    }

    /// Daily SST field over `bbox` for one day. Land and missing cells are masked.
    pub fn fetch_sst(&self, bbox: &BBox, label: &str, date: NaiveDate) -> Result<Fetched<GridSlice>, ClientError> {
        bbox.validate().map_err(|e| ClientError::FormatError(e.to_string()))?;
        let day_start = date.and_hms_opt(0, 0, 0).unwrap().and_utc();
        let day_end = date.and_hms_opt(23, 59, 59).unwrap().and_utc();
        let window = self.coverage().window(DatasetFamily::Crw);
        if day_end < window.start || window.end.is_some_and(|e| day_start > e) {
            return Err(ClientError::OutOfCoverage(format!(
                "CRW covers {}; requested {date}",
                window.describe()
            )));
        }
        let closed = self.is_closed(DatasetFamily::Crw, day_end);
        let rec = self.get(self.sst_url(bbox, date), closed)?;
        let variable = &self.config().crw.variable;
        let (mut grid, conversions) = parse_sst_grid(&rec.bytes, variable, bbox)?;
        if grid.timestamp == DateTime::<Utc>::MIN_UTC {
            grid.timestamp = date.and_hms_opt(12, 0, 0).unwrap().and_utc();
        }
        let mut steps = vec![format!("requested `{variable}` for {date} over {label} via ERDDAP griddap")];
        steps.extend(conversions);
        steps.push(format!(
            "masked {} of {} cells (land or missing)",
            grid.values.len() - grid.unmasked_count(),
            grid.values.len()
        ));
        let provenance = Provenance {
            source_name: DatasetFamily::Crw.source_name().to_string(),
            dataset_id: format!("crw:{variable}"),
            station_or_grid: format!(
                "{label} grid {}x{} [{:.2}..{:.2} N, {:.2}..{:.2} E]",
                grid.lats.len(),
                grid.lons.len(),
                bbox.lat_min,
                bbox.lat_max,
                bbox.lon_min,
                bbox.lon_max
            ),
            unit: Unit::Celsius,
            datum: None,
            time_span: TimeRange {
                start: day_start,
                end: day_end,
                resolution: Resolution::Daily,
            },
            retrieved_at: rec.fetched_at,
            processing_steps: steps,
        };
        Ok(Fetched { data: grid, provenance })
    }
}
