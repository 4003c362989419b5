use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::model::DatasetFamily;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageWindow {
    pub start: DateTime<Utc>,
    /// `None` means the record is still growing.
    #[serde(default)]
    pub end: Option<DateTime<Utc>>,
    #[serde(default)]
    pub note: Option<String>,
}

impl CoverageWindow {
    pub fn describe(&self) -> String {
        match self.end {
            Some(end) => format!("{}..{}", self.start.format("%Y-%m-%d"), end.format("%Y-%m-%d")),
            None => format!("{}..present", self.start.format("%Y-%m-%d")),
        }
    }

    /// A range is closed when it ends before the coverage end or well in the past.
    pub fn is_closed(&self, end: DateTime<Utc>, now: DateTime<Utc>) -> bool {
        self.end.map(|e| end <= e).unwrap_or(false) || end < now - chrono::Duration::days(60)
    }
}

/// Published coverage per dataset family, loaded from the providers config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageTable {
    #[serde(default)]
    pub version: String,
    pub windows: BTreeMap<DatasetFamily, CoverageWindow>,
}

impl CoverageTable {
    /// The table shipped with the crate.
    pub fn builtin() -> Self {
        crate::config::ProvidersConfig::builtin().coverage_table()
    }

    pub fn window(&self, family: DatasetFamily) -> &CoverageWindow {
        // Every family is required at load time.
        &self.windows[&family]
    }
}
