use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;

use super::{csv_error, finish_rows, headers, line_of, normalize_fips, open_csv, parse_date, require_column, TableManifest};
use crate::error::{Error, Result, RowError};

/// Precomputed per-(county, date) features, e.g. the output of the synthetic
/// generator. Empty cells are missing.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureTable {
    pub columns: Vec<String>,
    pub rows: BTreeMap<(String, NaiveDate), Vec<Option<f64>>>,
}

pub fn load_feature_table(path: &Path, manifest: &TableManifest) -> Result<FeatureTable> {
    let mut rdr = open_csv(path, b',')?;
    let headers = headers(path, &mut rdr)?;
    let c_date = require_column(path, &headers, &manifest.date_column)?;
    let c_fips = require_column(path, &headers, &manifest.fips_column)?;
    let value_cols: Vec<usize> = (0..headers.len()).filter(|&j| j != c_date && j != c_fips).collect();
    let mut table = FeatureTable {
        columns: value_cols.iter().map(|&j| headers[j].clone()).collect(),
        rows: BTreeMap::new(),
    };
    let mut errors = Vec::new();
    for (ordinal, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = line_of(&record, ordinal);
        let field = |i: usize| record.get(i).unwrap_or("").trim();
        let (Some(fips), Some(date)) = (normalize_fips(field(c_fips)), parse_date(field(c_date))) else {
            errors.push(RowError { line, message: "bad fips/date".into() });
            continue;
        };
        let mut values = Vec::with_capacity(value_cols.len());
        for &j in &value_cols {
            match field(j) {
                "" => values.push(None),
                s => match s.parse::<f64>() {
                    Ok(v) => values.push(Some(v)),
                    Err(_) => {
                        errors.push(RowError { line, message: format!("{}: not numeric {s:?}", headers[j]) });
                        values.push(None);
                    }
                },
            }
        }
        table.rows.insert((fips, date), values);
    }
    finish_rows(path, errors)?;
    Ok(table)
}

pub fn write_feature_table(path: &Path, table: &FeatureTable) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let io = |e: csv::Error| csv_error(path, e);
    let mut header = vec!["date".to_string(), "fips".to_string()];
    header.extend(table.columns.iter().cloned());
    w.write_record(&header).map_err(io)?;
    for ((fips, date), values) in &table.rows {
        let mut rec = vec![date.format("%Y-%m-%d").to_string(), fips.clone()];
        rec.extend(values.iter().map(|v| v.map(|x| x.to_string()).unwrap_or_default()));
        w.write_record(&rec).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
