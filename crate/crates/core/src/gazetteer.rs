//! Place names to tide stations and named regions.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{BBox, Datum, Station};

const BUILTIN_GAZETTEER: &str = include_str!("../../../data/gazetteer.csv");

#[derive(Debug, Error)]
pub enum GazetteerError {
    #[error("cannot read gazetteer {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("gazetteer line {line}: {message}")]
    Invalid { line: u64, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedRegion {
    pub key: String,
    pub name: String,
    pub bbox: BBox,
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Place {
    Station(Station),
    Region(NamedRegion),
}

impl Place {
    pub fn name(&self) -> &str {
        match self {
            Place::Station(s) => &s.name,
            Place::Region(r) => &r.name,
        }
    }
}

#[derive(Debug, Deserialize)]
struct Row {
    name: String,
    kind: String,
    id_or_bbox: String,
    lat: f64,
    lon: f64,
    #[serde(default)]
    datums: String,
}

/// Lowercases, folds apostrophes, drops a possessive `'s`, strips punctuation, collapses whitespace.
pub fn normalize_name(raw: &str) -> String {
    let folded = raw.replace(['\u{2019}', '\u{2018}', '`'], "'").to_lowercase();
    let words: Vec<String> = folded
        .split_whitespace()
        .map(|w| {
            let w = w.strip_suffix("'s").unwrap_or(w);
            w.chars().filter(|c| c.is_alphanumeric() || *c == '-').collect::<String>()
        })
        .filter(|w| !w.is_empty())
        .collect();
    words.join(" ")
}

/// `"Gulf of Mexico"` → `"GulfOfMexico"`.
pub fn region_key(name: &str) -> String {
    name.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| {
            let mut chars = w.chars();
            let first = chars.next().unwrap().to_uppercase();
            first.chain(chars).collect::<String>()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Gazetteer {
    pub version: String,
    entries: BTreeMap<String, Place>,
    stations: BTreeMap<String, Station>,
    regions: BTreeMap<String, NamedRegion>,
    max_words: usize,
}

impl Gazetteer {
    pub fn builtin() -> Self {
        Self::parse(BUILTIN_GAZETTEER).expect("bundled gazetteer is valid")
    }

    pub fn load(path: &Path) -> Result<Self, GazetteerError> {
        let text = std::fs::read_to_string(path).map_err(|source| GazetteerError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, GazetteerError> {
        let mut gz = Gazetteer::default();
        for line in text.lines().take_while(|l| l.starts_with('#')) {
            if let Some(v) = line.trim_start_matches('#').trim().strip_prefix("version:") {
                gz.version = v.trim().to_string();
            }
        }
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(text.as_bytes());
        for row in reader.deserialize::<Row>() {
            let row = row.map_err(|e| GazetteerError::Invalid {
                line: e.position().map_or(0, |p| p.line()),
                message: e.to_string(),
            })?;
            gz.add_row(row)?;
        }
        Ok(gz)
    }

    fn add_row(&mut self, row: Row) -> Result<(), GazetteerError> {
        let invalid = |message: String| GazetteerError::Invalid { line: 0, message };
        let key = normalize_name(&row.name);
        if key.is_empty() {
            return Err(invalid("empty place name".into()));
        }
        let place = match row.kind.to_ascii_lowercase().as_str() {
            "station" => {
                let datums = row
                    .datums
                    .split(';')
                    .filter(|d| !d.trim().is_empty())
                    .map(|d| d.parse::<Datum>())
                    .collect::<Result<BTreeSet<_>, _>>()
                    .map_err(|e| invalid(format!("{}: {e}", row.name)))?;
                let id = row.id_or_bbox.clone();
                // The first row for an id names the station.
                let station = match self.stations.get(&id) {
                    Some(s) => s.clone(),
                    None => Station::new(id.clone(), row.name.clone(), row.lat, row.lon, datums)
                        .map_err(|e| invalid(format!("{}: {e}", row.name)))?,
                };
                self.stations.entry(id).or_insert_with(|| station.clone());
                Place::Station(station)
            }
            "region" => {
                let parts: Vec<f64> = row
                    .id_or_bbox
                    .split(';')
                    .map(|p| p.trim().parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| invalid(format!("{}: bad bbox: {e}", row.name)))?;
                let [lat_min, lat_max, lon_min, lon_max] = parts[..] else {
                    return Err(invalid(format!("{}: bbox needs 4 numbers", row.name)));
                };
                let bbox = BBox::new(lat_min, lat_max, lon_min, lon_max)
                    .map_err(|e| invalid(format!("{}: {e}", row.name)))?;
                let region = NamedRegion {
                    key: region_key(&row.name),
                    name: row.name.clone(),
                    bbox,
                    lat: row.lat,
                    lon: row.lon,
                };
                self.regions.insert(region.key.clone(), region.clone());
                Place::Region(region)
            }
            other => return Err(invalid(format!("{}: unknown kind '{other}'", row.name))),
        };
        if self.entries.contains_key(&key) {
            return Err(invalid(format!("duplicate place name '{}'", row.name)));
        }
        self.max_words = self.max_words.max(key.split(' ').count());
        self.entries.insert(key, place);
        Ok(())
    }

    /// Case- and whitespace-insensitive lookup by place name, station id or region key.
    pub fn lookup(&self, name: &str) -> Option<Place> {
        if let Some(p) = self.entries.get(&normalize_name(name)) {
            return Some(p.clone());
        }
        let trimmed = name.trim();
        if let Some(s) = self.stations.get(trimmed) {
            return Some(Place::Station(s.clone()));
        }
        self.regions
            .values()
            .find(|r| r.key.eq_ignore_ascii_case(trimmed) || r.key.eq_ignore_ascii_case(&region_key(trimmed)))
            .map(|r| Place::Region(r.clone()))
    }

    pub fn station(&self, id: &str) -> Option<&Station> {
        self.stations.get(id)
    }

    pub fn region(&self, key: &str) -> Option<&NamedRegion> {
        self.regions.get(key)
    }

    pub fn stations(&self) -> impl Iterator<Item = &Station> {
        self.stations.values()
    }

    pub fn regions(&self) -> impl Iterator<Item = &NamedRegion> {
        self.regions.values()
    }

    /// Longest place name, in words.
    pub fn max_words(&self) -> usize {
        self.max_words
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookup_is_case_and_space_insensitive() {
        let gz = Gazetteer::builtin();
        assert_eq!(gz.version, "2025.06");
        for name in ["Boston", "  BOSTON ", "boston's", "Boston\u{2019}s", "Boston   Harbor", "8443970"] {
            match gz.lookup(name) {
                Some(Place::Station(s)) => assert_eq!(s.id, "8443970", "{name}"),
                other => panic!("{name}: {other:?}"),
            }
        }
        match gz.lookup("gulf of   MEXICO") {
            Some(Place::Region(r)) => {
                assert_eq!(r.key, "GulfOfMexico");
                assert_eq!(r.bbox, BBox::new(18.0, 31.0, -98.0, -80.5).unwrap());
            }
            other => panic!("{other:?}"),
        }
        assert!(gz.lookup("GulfOfMexico").is_some());
        assert!(gz.lookup("Atlantis").is_none());
        assert_eq!(gz.lookup("Virginia Key").unwrap().name(), "Virginia Key");
    }

    #[test]
    fn every_station_is_valid() {
        let gz = Gazetteer::builtin();
        assert!(gz.stations().count() >= 2);
        for s in gz.stations() {
            s.validate().unwrap();
            assert!(s.supported_datums.contains(&Datum::Msl));
        }
    }

    #[test]
    fn rejects_bad_rows() {
        let head = "name,kind,id_or_bbox,lat,lon,datums\n";
        assert!(Gazetteer::parse(&format!("{head}X,station,1,95,0,MSL\n")).is_err());
        assert!(Gazetteer::parse(&format!("{head}X,station,1,0,0,\n")).is_err());
        assert!(Gazetteer::parse(&format!("{head}X,region,1;2;3,0,0,\n")).is_err());
        assert!(Gazetteer::parse(&format!("{head}X,planet,1,0,0,\n")).is_err());
        assert!(Gazetteer::parse(&format!("{head}X,station,1,0,0,MSL\nx,station,2,0,0,MSL\n")).is_err());
    }

    #[test]
    fn region_keys() {
        assert_eq!(region_key("Gulf of Mexico"), "GulfOfMexico");
        assert_eq!(normalize_name(" Virginia  Key's "), "virginia key");
    }
}
