use std::collections::BTreeMap;
use std::path::Path;

use super::{csv_error, finish_rows, headers, line_of, normalize_fips, open_csv, require_column, GazetteerManifest};
use crate::error::{Result, RowError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Centroid {
    pub latitude: f64,
    pub longitude: f64,
}

/// County centroids keyed by FIPS.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Gazetteer {
    pub centroids: BTreeMap<String, Centroid>,
    /// Rows whose GEOID repeated an earlier one (the later row wins).
    pub duplicates: usize,
}

/// Loads a tab-separated Census gazetteer county file.
pub fn load_gazetteer(path: &Path, manifest: &GazetteerManifest) -> Result<Gazetteer> {
    if std::fs::metadata(path)
        .map_err(|e| crate::Error::io(path, e))?
        .len()
        == 0
    {
        return Ok(Gazetteer::default());
    }
    let mut rdr = open_csv(path, b'\t')?;
    let headers = headers(path, &mut rdr)?;
    let c_geoid = require_column(path, &headers, &manifest.geoid_column)?;
    let c_lat = require_column(path, &headers, &manifest.lat_column)?;
    let c_lon = require_column(path, &headers, &manifest.lon_column)?;

    let mut out = Gazetteer::default();
    let mut errors = Vec::new();
    for (ordinal, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = line_of(&record, ordinal);
        let field = |i: usize| record.get(i).unwrap_or("").trim();
        let Some(fips) = normalize_fips(field(c_geoid)) else {
            errors.push(RowError { line, message: format!("bad GEOID {:?}", field(c_geoid)) });
            continue;
        };
        let lat = field(c_lat).parse::<f64>().ok().filter(|v| (-90.0..=90.0).contains(v));
        let lon = field(c_lon).parse::<f64>().ok().filter(|v| (-180.0..=180.0).contains(v));
        match (lat, lon) {
            (Some(latitude), Some(longitude)) => {
                if out.centroids.insert(fips, Centroid { latitude, longitude }).is_some() {
                    out.duplicates += 1;
                }
            }
            _ => errors.push(RowError {
                line,
                message: format!(
                    "coordinate out of range or unparseable: lat={:?} lon={:?}",
                    field(c_lat),
                    field(c_lon)
                ),
            }),
        }
    }
    finish_rows(path, errors)?;
    Ok(out)
}
