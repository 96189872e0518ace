use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;

use super::{
    csv_error, finish_rows, headers, line_of, open_csv, parse_date, require_column, state_code,
    TrackingManifest,
};
use crate::error::{Result, RowError};

/// Daily state testing features keyed by (date, state code).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrackingTable {
    pub columns: Vec<String>,
    pub rows: BTreeMap<(NaiveDate, String), Vec<Option<f64>>>,
}

impl TrackingTable {
    /// Values for a state-day; `None` when the pair is absent altogether.
    pub fn get(&self, date: NaiveDate, state: &str) -> Option<&[Option<f64>]> {
        self.rows.get(&(date, state.to_string())).map(Vec::as_slice)
    }
}

/// Loads a COVID Tracking-style daily state CSV. When the file has test and
/// positive counts but no positivity column, positivity is derived as
/// positive / tests (missing when tests is zero).
pub fn load_tracking(path: &Path, manifest: &TrackingManifest) -> Result<TrackingTable> {
    let mut rdr = open_csv(path, b',')?;
    let headers = headers(path, &mut rdr)?;
    let c_date = require_column(path, &headers, &manifest.date_column)?;
    let c_state = require_column(path, &headers, &manifest.state_column)?;
    let records = rdr
        .records()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| csv_error(path, e))?;

    let selected: Vec<usize> = if manifest.columns.is_empty() {
        (0..headers.len())
            .filter(|&j| j != c_date && j != c_state && !manifest.exclude.contains(&headers[j]))
            .filter(|&j| {
                let mut any = false;
                let numeric = records.iter().all(|r| {
                    let s = r.get(j).unwrap_or("").trim();
                    if s.is_empty() {
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
    let position = |name: &str| selected.iter().position(|&j| headers[j] == name);
    let derive = if headers.contains(&manifest.positivity_column) {
        None
    } else {
        position(&manifest.tests_column).zip(position(&manifest.positive_column))
    };

    let mut columns: Vec<String> = selected
        .iter()
        .map(|&j| manifest.rename.get(&headers[j]).cloned().unwrap_or_else(|| headers[j].clone()))
        .collect();
    if derive.is_some() {
        columns.push(manifest.positivity_column.clone());
    }

    let mut rows = BTreeMap::new();
    let mut errors = Vec::new();
    for (ordinal, r) in records.iter().enumerate() {
        let line = line_of(r, ordinal);
        let field = |i: usize| r.get(i).unwrap_or("").trim();
        let date = parse_date(field(c_date));
        let state = state_code(field(c_state));
        let (Some(date), Some(state)) = (date, state) else {
            errors.push(RowError {
                line,
                message: format!("bad date/state {:?}/{:?}", field(c_date), field(c_state)),
            });
            continue;
        };
        let mut values = Vec::with_capacity(columns.len());
        for &j in &selected {
            let s = field(j);
            if s.is_empty() {
                values.push(None);
                continue;
            }
            match s.parse::<f64>() {
                Ok(v) if v < 0.0 => {
                    errors.push(RowError { line, message: format!("{}: negative count {v}", headers[j]) });
                    values.push(None);
                }
                Ok(v) => values.push(Some(v)),
                Err(_) => {
                    errors.push(RowError { line, message: format!("{}: not numeric {s:?}", headers[j]) });
                    values.push(None);
                }
            }
        }
        if let Some((t, p)) = derive {
            let ratio = match (values[t], values[p]) {
                (Some(tests), Some(pos)) if tests > 0.0 => Some(pos / tests),
                _ => None,
            };
            values.push(ratio);
        }
        rows.insert((date, state.to_string()), values);
    }
    finish_rows(path, errors)?;
    Ok(TrackingTable { columns, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Error;
    use std::io::Write;

    fn write(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn d(s: &str) -> NaiveDate {
        parse_date(s).unwrap()
    }

    #[test]
    fn derives_positivity() {
        let f = write(
            "date,state,totalTestResults,positive,dataQualityGrade\n\
             20200401,NY,100,7,A\n\
             20200401,CA,0,0,B\n\
             20200402,NY,,3,A\n",
        );
        let t = load_tracking(f.path(), &TrackingManifest::default()).unwrap();
        assert_eq!(t.columns, vec!["totalTestResults", "positive", "positivity"]);
        let ny = t.get(d("2020-04-01"), "NY").unwrap();
        assert_eq!(ny[2], Some(7.0 / 100.0));
        assert!((ny[2].unwrap() - 0.07).abs() < 1e-15);
        // zero tests: guarded division
        assert_eq!(t.get(d("2020-04-01"), "CA").unwrap()[2], None);
        // absent count: positivity missing
        assert_eq!(t.get(d("2020-04-02"), "NY").unwrap()[2], None);
        assert!(t.get(d("2020-04-02"), "CA").is_none());
    }

    #[test]
    fn explicit_positivity_column_is_kept() {
        let f = write("date,state,totalTestResults,positive,positivity\n2020-04-01,NY,100,7,\n");
        let t = load_tracking(f.path(), &TrackingManifest::default()).unwrap();
        // an all-empty positivity column is skipped, and nothing is derived in its place
        assert_eq!(t.columns, vec!["totalTestResults", "positive"]);
    }

    #[test]
    fn negative_count_rejected() {
        let f = write("date,state,totalTestResults\n2020-04-01,NY,-5\n");
        assert!(matches!(
            load_tracking(f.path(), &TrackingManifest::default()),
            Err(Error::Rows { .. })
        ));
    }
}
