use std::collections::BTreeMap;
use std::path::Path;

use super::{csv_error, finish_rows, headers, line_of, normalize_fips, open_csv, require_column, SviManifest};
use crate::error::{Result, RowError};
use crate::stats::median;

/// County-level SVI indicators keyed by FIPS; `None` marks a missing value.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SviTable {
    /// Feature names (after manifest renames), parallel to each row.
    pub columns: Vec<String>,
    pub rows: BTreeMap<String, Vec<Option<f64>>>,
}

impl SviTable {
    /// Median of each column over counties with a present value.
    pub fn column_medians(&self) -> Vec<Option<f64>> {
        (0..self.columns.len())
            .map(|j| {
                let mut present: Vec<f64> = self.rows.values().filter_map(|r| r[j]).collect();
                median(&mut present)
            })
            .collect()
    }
}

/// Loads an SVI county CSV. Cells equal to the manifest sentinel (default
/// -999) or empty become missing.
pub fn load_svi(path: &Path, manifest: &SviManifest) -> Result<SviTable> {
    let mut rdr = open_csv(path, b',')?;
    let headers = headers(path, &mut rdr)?;
    let c_fips = require_column(path, &headers, &manifest.fips_column)?;
    let records = rdr
        .records()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| csv_error(path, e))?;

    let is_missing = |s: &str| s.is_empty() || s.parse::<f64>().is_ok_and(|v| v == manifest.sentinel);
    let selected: Vec<usize> = if manifest.columns.is_empty() {
        (0..headers.len())
            .filter(|&j| j != c_fips && !manifest.exclude.contains(&headers[j]))
            .filter(|&j| {
                let mut any = false;
                let numeric = records.iter().all(|r| {
                    let s = r.get(j).unwrap_or("").trim();
                    if is_missing(s) {
                        return true;
                    }
                    any = true;
                    s.parse::<f64>().is_ok()
                });
                numeric && any
            })
            .collect()
    } else {
        manifest
            .columns
            .iter()
            .map(|c| require_column(path, &headers, c))
            .collect::<Result<_>>()?
    };

    let columns = selected
        .iter()
        .map(|&j| manifest.rename.get(&headers[j]).cloned().unwrap_or_else(|| headers[j].clone()))
        .collect();
    let mut rows = BTreeMap::new();
    let mut errors = Vec::new();
    for (ordinal, r) in records.iter().enumerate() {
        let line = line_of(r, ordinal);
        let Some(fips) = normalize_fips(r.get(c_fips).unwrap_or("")) else {
            errors.push(RowError { line, message: format!("bad FIPS {:?}", r.get(c_fips)) });
            continue;
        };
        let mut values = Vec::with_capacity(selected.len());
        for &j in &selected {
            let s = r.get(j).unwrap_or("").trim();
            if is_missing(s) {
                values.push(None);
            } else if let Ok(v) = s.parse::<f64>() {
                values.push(Some(v));
            } else {
                errors.push(RowError { line, message: format!("column {}: not numeric: {s:?}", headers[j]) });
                values.push(None);
            }
        }
        rows.insert(fips, values);
    }
    finish_rows(path, errors)?;
    Ok(SviTable { columns, rows })
}
