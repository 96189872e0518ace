//! Dataset loaders and the per-(day, county) feature frame.
//!
//! Case counts come from a NYTimes-style county CSV. County features come from
//! the Census gazetteer (centroids) and the CDC SVI table; state features from
//! a CUSP-style policy table and a COVID Tracking-style daily testing table.
//! State features are inherited by every county of the state.

mod assemble;
mod cases;
mod cusp;
mod gazetteer;
mod manifest;
mod svi;
mod table;
mod tracking;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, RowError};
use crate::panel::{CountyId, DayIndex};

pub use assemble::{assemble_features, FeatureSources};
pub use cases::{load_cases, CaseData};
pub use cusp::{load_cusp, CuspTable, PolicyInterval};
pub use gazetteer::{load_gazetteer, Centroid, Gazetteer};
pub use manifest::{
    CuspManifest, GazetteerManifest, Manifest, PolicyColumns, SviManifest, TableManifest,
    TrackingManifest,
};
pub use svi::{load_svi, SviTable};
pub use table::{load_feature_table, write_feature_table, FeatureTable};
pub use tracking::{load_tracking, TrackingTable};

/// Where a feature column came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Gazetteer,
    Svi,
    Cusp,
    Tracking,
    Derived,
}

/// Feature names shared by every vector of a frame.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FeatureRegistry {
    names: Vec<String>,
    provenance: Vec<Provenance>,
}

impl FeatureRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a feature; names must be unique.
    pub fn push(&mut self, name: impl Into<String>, provenance: Provenance) -> Result<usize> {
        let name = name.into();
        if self.names.contains(&name) {
            return Err(Error::InvalidArgument(format!(
                "duplicate feature name {name:?}"
            )));
        }
        self.names.push(name);
        self.provenance.push(provenance);
        Ok(self.names.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn provenance(&self, index: usize) -> Provenance {
        self.provenance[index]
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// Feature values for one (day, county) cell. Missing slots hold the imputed
/// column median.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub missing: Vec<bool>,
    pub registry: Arc<FeatureRegistry>,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.registry.position(name).map(|i| self.values[i])
    }
}

/// Borrowed view of one frame row.
#[derive(Debug, Clone, Copy)]
pub struct FeatureRow<'a> {
    pub values: &'a [f64],
    pub missing: &'a [bool],
}

#[derive(Debug, Clone, PartialEq)]
struct CountyFeatures {
    start: DayIndex,
    days: usize,
    values: Vec<f64>,
    missing: Vec<bool>,
}

/// Imputed feature vectors for every observed (day, county) cell of a panel.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFrame {
    registry: Arc<FeatureRegistry>,
    counties: BTreeMap<CountyId, CountyFeatures>,
    dropped: Vec<String>,
    medians: Vec<f64>,
}

impl FeatureFrame {
    pub fn registry(&self) -> &Arc<FeatureRegistry> {
        &self.registry
    }

    pub fn num_features(&self) -> usize {
        self.registry.len()
    }

    /// Columns removed because they had no present value at all.
    pub fn dropped_columns(&self) -> &[String] {
        &self.dropped
    }

    /// Per-column medians used for imputation (0 for mask columns).
    pub fn medians(&self) -> &[f64] {
        &self.medians
    }

    pub fn counties(&self) -> impl Iterator<Item = &CountyId> {
        self.counties.keys()
    }

    pub fn row(&self, day: DayIndex, county: &CountyId) -> Option<FeatureRow<'_>> {
        let c = self.counties.get(county)?;
        let i = day.get().checked_sub(c.start.get())?;
        if i >= c.days {
            return None;
        }
        let m = self.registry.len();
        Some(FeatureRow {
            values: &c.values[i * m..(i + 1) * m],
            missing: &c.missing[i * m..(i + 1) * m],
        })
    }

    pub fn vector(&self, day: DayIndex, county: &CountyId) -> Option<FeatureVector> {
        self.row(day, county).map(|r| FeatureVector {
            values: r.values.to_vec(),
            missing: r.missing.to_vec(),
            registry: Arc::clone(&self.registry),
        })
    }

    /// All rows in (county, day) order.
    pub fn iter(&self) -> impl Iterator<Item = (&CountyId, DayIndex, FeatureRow<'_>)> {
        let m = self.registry.len();
        self.counties.iter().flat_map(move |(county, c)| {
            (0..c.days).map(move |i| {
                (
                    county,
                    DayIndex::from_offset(c.start.get() + i),
                    FeatureRow {
                        values: &c.values[i * m..(i + 1) * m],
                        missing: &c.missing[i * m..(i + 1) * m],
                    },
                )
            })
        })
    }
}

/// Parses `YYYY-MM-DD`, `YYYYMMDD` or `M/D/YYYY`.
pub(crate) fn parse_date(s: &str) -> Option<NaiveDate> {
    let s = s.trim();
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .or_else(|_| NaiveDate::parse_from_str(s, "%Y%m%d"))
        .or_else(|_| NaiveDate::parse_from_str(s, "%m/%d/%Y"))
        .ok()
}

/// Left-pads numeric FIPS codes that lost their leading zero.
pub(crate) fn normalize_fips(raw: &str) -> Option<String> {
    let s = raw.trim();
    let s = s.strip_suffix(".0").unwrap_or(s);
    if s.is_empty() || s.len() > 5 || !s.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    Some(format!("{s:0>5}"))
}

const STATES: &[(&str, &str)] = &[
    ("Alabama", "AL"),
    ("Alaska", "AK"),
    ("American Samoa", "AS"),
    ("Arizona", "AZ"),
    ("Arkansas", "AR"),
    ("California", "CA"),
    ("Colorado", "CO"),
    ("Connecticut", "CT"),
    ("Delaware", "DE"),
    ("District of Columbia", "DC"),
    ("Florida", "FL"),
    ("Georgia", "GA"),
    ("Guam", "GU"),
    ("Hawaii", "HI"),
    ("Idaho", "ID"),
    ("Illinois", "IL"),
    ("Indiana", "IN"),
    ("Iowa", "IA"),
    ("Kansas", "KS"),
    ("Kentucky", "KY"),
    ("Louisiana", "LA"),
    ("Maine", "ME"),
    ("Maryland", "MD"),
    ("Massachusetts", "MA"),
    ("Michigan", "MI"),
    ("Minnesota", "MN"),
    ("Mississippi", "MS"),
    ("Missouri", "MO"),
    ("Montana", "MT"),
    ("Nebraska", "NE"),
    ("Nevada", "NV"),
    ("New Hampshire", "NH"),
    ("New Jersey", "NJ"),
    ("New Mexico", "NM"),
    ("New York", "NY"),
    ("North Carolina", "NC"),
    ("North Dakota", "ND"),
    ("Northern Mariana Islands", "MP"),
    ("Ohio", "OH"),
    ("Oklahoma", "OK"),
    ("Oregon", "OR"),
    ("Pennsylvania", "PA"),
    ("Puerto Rico", "PR"),
    ("Rhode Island", "RI"),
    ("South Carolina", "SC"),
    ("South Dakota", "SD"),
    ("Tennessee", "TN"),
    ("Texas", "TX"),
    ("Utah", "UT"),
    ("Vermont", "VT"),
    ("Virgin Islands", "VI"),
    ("Virginia", "VA"),
    ("Washington", "WA"),
    ("West Virginia", "WV"),
    ("Wisconsin", "WI"),
    ("Wyoming", "WY"),
];

/// Maps a state name or postal code to its 2-letter code.
pub fn state_code(name: &str) -> Option<&'static str> {
    let name = name.trim();
    STATES
        .iter()
        .find(|(full, code)| full.eq_ignore_ascii_case(name) || code.eq_ignore_ascii_case(name))
        .map(|&(_, code)| code)
}

pub(crate) fn open_csv(path: &Path, delimiter: u8) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => Error::Format {
            path: path.to_path_buf(),
            message: format!("{other:?}"),
        },
    }
}

pub(crate) fn headers(path: &Path, rdr: &mut csv::Reader<std::fs::File>) -> Result<Vec<String>> {
    Ok(rdr
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(|h| h.trim().trim_start_matches('\u{feff}').to_string())
        .collect())
}

pub(crate) fn require_column(path: &Path, headers: &[String], name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::Format {
            path: path.to_path_buf(),
            message: format!("missing column {name:?}"),
        })
}

pub(crate) fn finish_rows(path: &Path, errors: Vec<RowError>) -> Result<()> {
    if errors.is_empty() {
        Ok(())
    } else {
        Err(Error::Rows {
            path: path.to_path_buf(),
            errors,
        })
    }
}

/// Line number of a record, falling back to its ordinal (+1 for the header).
pub(crate) fn line_of(record: &csv::StringRecord, ordinal: usize) -> usize {
    record
        .position()
        .map(|p| p.line() as usize)
        .unwrap_or(ordinal + 2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dates_in_all_formats() {
        let d = NaiveDate::from_ymd_opt(2020, 3, 5).unwrap();
        assert_eq!(parse_date("2020-03-05"), Some(d));
        assert_eq!(parse_date("20200305"), Some(d));
        assert_eq!(parse_date("3/5/2020"), Some(d));
        assert_eq!(parse_date("0"), None);
    }

    #[test]
    fn fips_padding() {
        assert_eq!(normalize_fips("1001").as_deref(), Some("01001"));
        assert_eq!(normalize_fips("1001.0").as_deref(), Some("01001"));
        assert_eq!(normalize_fips("06037").as_deref(), Some("06037"));
        assert_eq!(normalize_fips(""), None);
        assert_eq!(normalize_fips("123456"), None);
    }

    #[test]
    fn state_names() {
        assert_eq!(state_code("New York"), Some("NY"));
        assert_eq!(state_code("ny"), Some("NY"));
        assert_eq!(state_code("Atlantis"), None);
    }

    #[test]
    fn registry_rejects_duplicates() {
        let mut r = FeatureRegistry::new();
        r.push("a", Provenance::Svi).unwrap();
        assert!(r.push("a", Provenance::Cusp).is_err());
        assert_eq!(r.position("a"), Some(0));
    }
}
