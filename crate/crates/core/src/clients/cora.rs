//! CORA hourly hindcast: mesh subset, nearest wet node, then a node time series.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::netcdf::{NcError, NcFile};
use super::{fill_template, ClientError, Fetched, NoaaClients};
use crate::analysis::{nearest_node, Node};
use crate::model::{DatasetFamily, Datum, GeoPoint, Provenance, Series, TimeRange, Unit, Variable};

/// Kilometres per degree of latitude on the reference sphere.
const KM_PER_DEGREE: f64 = 111.195;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeInfo {
    /// Global mesh node id.
    pub index: u64,
    pub lat: f64,
    pub lon: f64,
    pub distance_km: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoraSeries {
    pub location: String,
    pub node: NodeInfo,
    pub series: Series,
}

fn nc_err(what: &str, e: NcError) -> ClientError {
    ClientError::FormatError(format!("{what}: {e}"))
}

fn normalize_lon(lon: f64) -> f64 {
    if lon > 180.0 {
        lon - 360.0
    } else {
        lon
    }
}

/// Mesh nodes from a subset file: `x` (lon), `y` (lat), optional `depth` and `node` id.
pub fn parse_mesh(bytes: &[u8]) -> Result<(Vec<u64>, Vec<Node>), ClientError> {
    let nc = NcFile::parse(bytes).map_err(|e| nc_err("CORA mesh", e))?;
    let lons = nc.read_masked("x").map_err(|e| nc_err("CORA mesh x", e))?;
    let lats = nc.read_masked("y").map_err(|e| nc_err("CORA mesh y", e))?;
    if lons.len() != lats.len() {
        return Err(ClientError::FormatError(format!(
            "CORA mesh has {} x and {} y values",
            lons.len(),
            lats.len()
        )));
    }
    let depth = if nc.has_var("depth") {
        Some(nc.read_masked("depth").map_err(|e| nc_err("CORA mesh depth", e))?)
    } else {
        None
    };
    let ids: Vec<u64> = if nc.has_var("node") {
        nc.read_raw("node")
            .map_err(|e| nc_err("CORA mesh node", e))?
            .into_iter()
            .map(|v| v as u64)
            .collect()
    } else {
        (0..lons.len() as u64).collect()
    };
    if ids.len() != lons.len() {
        return Err(ClientError::FormatError("CORA mesh node ids do not match coordinates".into()));
    }
    let nodes = lons
        .iter()
        .zip(&lats)
        .enumerate()
        .map(|(i, (lon, lat))| {
            let wet = depth.as_ref().map_or(true, |d| d[i].is_some());
            match (lat, lon) {
                (Some(lat), Some(lon)) => Node {
                    lat: *lat,
                    lon: normalize_lon(*lon),
                    valid: wet,
                },
                _ => Node {
                    lat: f64::NAN,
                    lon: f64::NAN,
                    valid: false,
                },
            }
        })
        .collect();
    Ok((ids, nodes))
}

/// Node time series: `time` (CF units) and `zeta` in meters.
pub fn parse_node_series(bytes: &[u8]) -> Result<(Vec<DateTime<Utc>>, Vec<Option<f64>>), ClientError> {
    let nc = NcFile::parse(bytes).map_err(|e| nc_err("CORA series", e))?;
    let times = nc.read_times("time").map_err(|e| nc_err("CORA series time", e))?;
    let zeta = nc.read_masked("zeta").map_err(|e| nc_err("CORA series zeta", e))?;
    if times.len() != zeta.len() {
        return Err(ClientError::FormatError(format!(
            "CORA series has {} times and {} zeta values",
            times.len(),
            zeta.len()
        )));
    }
    if let Some(units) = nc.var("zeta").ok().and_then(|v| v.attr_str("units")) {
        if !matches!(units.trim(), "m" | "meters" | "metre" | "meter" | "metres") {
            return Err(ClientError::FormatError(format!("unexpected zeta units '{units}'")));
        }
    }
    Ok((times, zeta))
}

impl NoaaClients {
    pub fn cora_mesh_url(&self, p: GeoPoint, radius_km: f64) -> String {
        let dlat = radius_km / KM_PER_DEGREE;
        let dlon = dlat / p.lat.to_radians().cos().abs().max(0.01);
        fill_template(
            &self.config().cora.mesh_url,
            &[
                ("lat_min", format!("{:.4}", p.lat - dlat)),
                ("lat_max", format!("{:.4}", p.lat + dlat)),
                ("lon_min", format!("{:.4}", p.lon - dlon)),
                ("lon_max", format!("{:.4}", p.lon + dlon)),
            ],
        )
    }

    pub fn cora_series_url(&self, node: u64, tr: &TimeRange) -> String {
        fill_template(
            &self.config().cora.series_url,
            &[
                ("node", node.to_string()),
                ("start", tr.start.format("%Y-%m-%dT%H:%M:%SZ").to_string()),
                ("end", tr.end.format("%Y-%m-%dT%H:%M:%SZ").to_string()),
            ],
        )
    }

    /// Hourly modeled water level at the wet node nearest `point`.
    pub fn fetch_cora_series(
        &self,
        label: &str,
        point: GeoPoint,
        tr: &TimeRange,
    ) -> Result<Fetched<CoraSeries>, ClientError> {
        let window = self.coverage().window(DatasetFamily::Cora);
        if tr.end < window.start || window.end.is_some_and(|e| tr.start > e) {
            return Err(ClientError::OutOfCoverage(format!(
                "CORA covers {}; requested {}..{}",
                window.describe(),
                tr.start.format("%Y-%m-%d"),
                tr.end.format("%Y-%m-%d")
            )));
        }
        let radius = self.config().cora.search_radius_km;
        // The mesh never changes, so its subset is always cacheable.
        let mesh = self.get(self.cora_mesh_url(point, radius), true)?;
        let (ids, nodes) = parse_mesh(&mesh.bytes)?;
        let (i, distance_km) = nearest_node(point, &nodes).map_err(|_| ClientError::NoValidNode { radius_km: radius })?;
        if distance_km > radius {
            return Err(ClientError::NoValidNode { radius_km: radius });
        }
        let node = NodeInfo {
            index: ids[i],
            lat: nodes[i].lat,
            lon: nodes[i].lon,
            distance_km,
        };

        let closed = self.is_closed(DatasetFamily::Cora, tr.end);
        let rec = self.get(self.cora_series_url(node.index, tr), closed)?;
        let (times, zeta) = parse_node_series(&rec.bytes)?;
        let mut points: Vec<(DateTime<Utc>, Option<f64>)> =
            times.into_iter().zip(zeta).filter(|(t, _)| tr.contains(*t)).collect();
        points.sort_by_key(|p| p.0);
        points.dedup_by_key(|p| p.0);
        if points.iter().all(|p| p.1.is_none()) {
            return Err(ClientError::GapOnly(format!(
                "CORA node {} has no valid zeta for {}..{}",
                node.index,
                tr.start.format("%Y-%m-%d"),
                tr.end.format("%Y-%m-%d")
            )));
        }
        let masked = points.iter().filter(|p| p.1.is_none()).count();
        let (timestamps, values): (Vec<_>, Vec<_>) = points.into_iter().unzip();
        let series = Series::new(timestamps, values, Unit::Meters, Some(Datum::Msl), Variable::CoraZeta)
            .map_err(|e| ClientError::FormatError(e.to_string()))?;
        let provenance = Provenance {
            source_name: DatasetFamily::Cora.source_name().to_string(),
            dataset_id: "cora:zeta".into(),
            station_or_grid: format!(
                "mesh node {} at ({:.4}, {:.4}), {:.2} km from {label}",
                node.index, node.lat, node.lon, distance_km
            ),
            unit: Unit::Meters,
            datum: Some(Datum::Msl),
            time_span: *tr,
            retrieved_at: rec.fetched_at,
            processing_steps: vec![
                format!(
                    "selected nearest wet mesh node within {radius} km of ({:.4}, {:.4}) by great-circle distance",
                    point.lat, point.lon
                ),
                format!("read hourly zeta for node {}", node.index),
                format!("masked {masked} of {} points (fill or out of valid range)", series.len()),
            ],
        };
        Ok(Fetched {
            data: CoraSeries {
                location: label.to_string(),
                node,
                series,
            },
            provenance,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lon_wraps_to_signed() {
        assert_eq!(normalize_lon(280.0), -80.0);
        assert_eq!(normalize_lon(-80.0), -80.0);
    }

    #[test]
    fn garbage_is_format_error() {
        assert!(matches!(parse_mesh(b"not netcdf"), Err(ClientError::FormatError(_))));
        assert!(matches!(parse_node_series(b""), Err(ClientError::FormatError(_))));
    }
}
