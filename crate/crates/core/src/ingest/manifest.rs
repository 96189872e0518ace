use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column-to-feature mapping for the feature datasets, read from TOML.
///
/// Every field has a default, so an empty manifest selects all numeric SVI
/// columns, every `*_start`/`*_end` CUSP policy pair and all numeric tracking
/// columns.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Manifest {
    pub gazetteer: GazetteerManifest,
    pub svi: SviManifest,
    pub cusp: CuspManifest,
    pub tracking: TrackingManifest,
    pub table: TableManifest,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GazetteerManifest {
    pub geoid_column: String,
    pub lat_column: String,
    pub lon_column: String,
}

impl Default for GazetteerManifest {
    fn default() -> Self {
        Self {
            geoid_column: "GEOID".into(),
            lat_column: "INTPTLAT".into(),
            lon_column: "INTPTLONG".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SviManifest {
    pub fips_column: String,
    pub sentinel: f64,
    /// Columns to use; empty means every numeric column not excluded.
    pub columns: Vec<String>,
    pub exclude: Vec<String>,
    /// Source column -> feature name.
    pub rename: BTreeMap<String, String>,
}

impl Default for SviManifest {
    fn default() -> Self {
        Self {
            fips_column: "FIPS".into(),
            sentinel: -999.0,
            columns: Vec::new(),
            exclude: vec!["ST".into(), "STCNTY".into()],
            rename: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyColumns {
    pub name: String,
    pub start: String,
    #[serde(default)]
    pub end: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CuspManifest {
    pub state_column: String,
    /// Explicit policies; empty means pair up `<name>_start` / `<name>_end` columns.
    pub policies: Vec<PolicyColumns>,
}

impl Default for CuspManifest {
    fn default() -> Self {
        Self {
            state_column: "state".into(),
            policies: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackingManifest {
    pub date_column: String,
    pub state_column: String,
    pub columns: Vec<String>,
    pub exclude: Vec<String>,
    pub rename: BTreeMap<String, String>,
    pub tests_column: String,
    pub positive_column: String,
    pub positivity_column: String,
}

impl Default for TrackingManifest {
    fn default() -> Self {
        Self {
            date_column: "date".into(),
            state_column: "state".into(),
            columns: Vec::new(),
            exclude: vec!["fips".into()],
            rename: BTreeMap::new(),
            tests_column: "totalTestResults".into(),
            positive_column: "positive".into(),
            positivity_column: "positivity".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TableManifest {
    pub date_column: String,
    pub fips_column: String,
}

impl Default for TableManifest {
    fn default() -> Self {
        Self {
            date_column: "date".into(),
            fips_column: "fips".into(),
        }
    }
}
