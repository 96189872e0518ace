use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::NaiveDate;

use super::{
    csv_error, finish_rows, headers, line_of, open_csv, parse_date, require_column, state_code,
    CuspManifest, PolicyColumns,
};
use crate::error::{Result, RowError};

/// A policy in force from `start` (inclusive) until `end` (exclusive), or
/// indefinitely when `end` is absent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PolicyInterval {
    pub start: NaiveDate,
    pub end: Option<NaiveDate>,
}

impl PolicyInterval {
    pub fn contains(&self, date: NaiveDate) -> bool {
        date >= self.start && self.end.is_none_or(|e| date < e)
    }
}

/// State policy intervals keyed by (state code, policy name).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CuspTable {
    pub policies: Vec<String>,
    pub states: BTreeSet<String>,
    pub intervals: BTreeMap<(String, String), Vec<PolicyInterval>>,
}

impl CuspTable {
    /// Whether `policy` is in force in `state` on `date`.
    pub fn is_active(&self, state: &str, policy: &str, date: NaiveDate) -> bool {
        self.intervals
            .get(&(state.to_string(), policy.to_string()))
            .is_some_and(|v| v.iter().any(|iv| iv.contains(date)))
    }
}

fn auto_policies(headers: &[String]) -> Vec<PolicyColumns> {
    headers
        .iter()
        .filter_map(|h| h.strip_suffix("_start"))
        .map(|name| {
            let end = format!("{name}_end");
            PolicyColumns {
                name: name.to_string(),
                start: format!("{name}_start"),
                end: headers.contains(&end).then_some(end),
            }
        })
        .collect()
}

/// Loads a CUSP-style table: one row per state (repeated rows add further
/// intervals), one start and optional end date column per policy. Empty or
/// `0` cells mean never enacted / never ended.
pub fn load_cusp(path: &Path, manifest: &CuspManifest) -> Result<CuspTable> {
    let mut rdr = open_csv(path, b',')?;
    let headers = headers(path, &mut rdr)?;
    let c_state = require_column(path, &headers, &manifest.state_column)?;
    let policies = if manifest.policies.is_empty() {
        auto_policies(&headers)
    } else {
        manifest.policies.clone()
    };
    let cols = policies
        .iter()
        .map(|p| {
            Ok((
                require_column(path, &headers, &p.start)?,
                p.end
                    .as_ref()
                    .map(|e| require_column(path, &headers, e))
                    .transpose()?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut table = CuspTable {
        policies: policies.iter().map(|p| p.name.clone()).collect(),
        ..Default::default()
    };
    let mut errors = Vec::new();
    for (ordinal, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = line_of(&record, ordinal);
        let field = |i: usize| record.get(i).unwrap_or("").trim();
        let Some(state) = state_code(field(c_state)) else {
            errors.push(RowError { line, message: format!("unknown state {:?}", field(c_state)) });
            continue;
        };
        table.states.insert(state.to_string());
        for (p, &(c_start, c_end)) in policies.iter().zip(&cols) {
            let date = |i: usize| -> std::result::Result<Option<NaiveDate>, String> {
                match field(i) {
                    "" | "0" => Ok(None),
                    s => parse_date(s).map(Some).ok_or_else(|| format!("{}: bad date {s:?}", headers[i])),
                }
            };
            let start = date(c_start);
            let end = c_end.map(date).unwrap_or(Ok(None));
            match (start, end) {
                (Ok(Some(start)), Ok(end)) => {
                    if end.is_some_and(|e| e < start) {
                        errors.push(RowError { line, message: format!("{}: end before start", p.name) });
                        continue;
                    }
                    table
                        .intervals
                        .entry((state.to_string(), p.name.clone()))
                        .or_default()
                        .push(PolicyInterval { start, end });
                }
                (Ok(None), Ok(None)) => {}
                (Ok(None), Ok(Some(_))) => {
                    errors.push(RowError { line, message: format!("{}: end without start", p.name) })
                }
                (Err(m), _) | (_, Err(m)) => errors.push(RowError { line, message: m }),
            }
        }
    }
    finish_rows(path, errors)?;
    Ok(table)
}
