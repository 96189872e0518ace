use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;

use super::{finish_rows, headers, line_of, normalize_fips, open_csv, parse_date, require_column, state_code};
use crate::error::{Result, RowError};
use crate::panel::{CountyId, CumulativeSeries};

/// Parsed case file.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseData {
    /// One series per county, sorted by FIPS. Not yet monotonicity-repaired.
    pub series: Vec<CumulativeSeries>,
    /// Rows without a FIPS code (e.g. "Unknown" counties).
    pub dropped_rows: usize,
}

struct Obs {
    date: NaiveDate,
    cases: u64,
    deaths: Option<u64>,
}

/// Loads `date,county,state,fips,cases,deaths` rows into per-county cumulative
/// series. Interior date gaps carry the previous cumulative value forward.
pub fn load_cases(path: &Path) -> Result<CaseData> {
    let mut rdr = open_csv(path, b',')?;
    let headers = headers(path, &mut rdr)?;
    let col = |name| require_column(path, &headers, name);
    let (c_date, _, c_state, c_fips, c_cases, c_deaths) = (
        col("date")?,
        col("county")?,
        col("state")?,
        col("fips")?,
        col("cases")?,
        col("deaths")?,
    );

    let mut by_fips: BTreeMap<String, (String, Vec<Obs>)> = BTreeMap::new();
    let mut errors = Vec::new();
    let mut dropped_rows = 0;
    for (ordinal, record) in rdr.records().enumerate() {
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                errors.push(RowError {
                    line: ordinal + 2,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let line = line_of(&record, ordinal);
        let field = |i: usize| record.get(i).unwrap_or("").trim();
        if field(c_fips).is_empty() {
            dropped_rows += 1;
            continue;
        }
        let mut row_errors = Vec::new();
        let fips = normalize_fips(field(c_fips));
        if fips.is_none() {
            row_errors.push(format!("bad fips {:?}", field(c_fips)));
        }
        let state = state_code(field(c_state));
        if state.is_none() {
            row_errors.push(format!("unknown state {:?}", field(c_state)));
        }
        let date = parse_date(field(c_date));
        if date.is_none() {
            row_errors.push(format!("bad date {:?}", field(c_date)));
        }
        let cases = field(c_cases).parse::<u64>().ok();
        if cases.is_none() {
            row_errors.push(format!("bad case count {:?}", field(c_cases)));
        }
        let deaths = match field(c_deaths) {
            "" => Ok(None),
            s => s.parse::<u64>().map(Some),
        };
        if deaths.is_err() {
            row_errors.push(format!("bad death count {:?}", field(c_deaths)));
        }
        if !row_errors.is_empty() {
            errors.push(RowError {
                line,
                message: row_errors.join("; "),
            });
            continue;
        }
        let (fips, state) = (fips.unwrap(), state.unwrap());
        let entry = by_fips
            .entry(fips)
            .or_insert_with(|| (state.to_string(), Vec::new()));
        entry.1.push(Obs {
            date: date.unwrap(),
            cases: cases.unwrap(),
            deaths: deaths.unwrap(),
        });
    }
    finish_rows(path, errors)?;

    let series = by_fips
        .into_iter()
        .map(|(fips, (state, mut obs))| {
            // stable sort: the last row for a repeated date wins
            obs.sort_by_key(|o| o.date);
            let first = obs[0].date;
            let last = obs[obs.len() - 1].date;
            let days = (last - first).num_days() as usize + 1;
            let mut cases = vec![0u64; days];
            let mut deaths = vec![0u64; days];
            let mut set = vec![false; days];
            for o in &obs {
                let i = (o.date - first).num_days() as usize;
                cases[i] = o.cases;
                if let Some(d) = o.deaths {
                    deaths[i] = d;
                } else if i > 0 {
                    deaths[i] = deaths[i - 1];
                }
                set[i] = true;
            }
            for i in 1..days {
                if !set[i] {
                    cases[i] = cases[i - 1];
                    deaths[i] = deaths[i - 1];
                }
            }
            let county = CountyId::new(fips, state).expect("validated fields");
            CumulativeSeries::new(county, first, cases, deaths).expect("equal lengths")
        })
        .collect();
    Ok(CaseData {
        series,
        dropped_rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
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
    fn forward_fills_gaps() {
        let f = write(
            "date,county,state,fips,cases,deaths\n\
             2020-03-01,Autauga,Alabama,01001,2,0\n\
             2020-03-03,Autauga,Alabama,01001,5,1\n",
        );
        let data = load_cases(f.path()).unwrap();
        assert_eq!(data.series.len(), 1);
        let s = &data.series[0];
        assert_eq!(s.cases, vec![2, 2, 5]);
        assert_eq!(s.deaths, vec![0, 0, 1]);
        assert_eq!(s.origin_date, d("2020-03-01"));
    }

    #[test]
    fn drops_rows_without_fips() {
        let f = write(
            "date,county,state,fips,cases,deaths\n\
             2020-03-01,Unknown,Alabama,,7,0\n\
             2020-03-01,Autauga,Alabama,01001,2,0\n",
        );
        let data = load_cases(f.path()).unwrap();
        assert_eq!(data.dropped_rows, 1);
        assert_eq!(data.series.len(), 1);
    }

    #[test]
    fn ten_row_fixture() {
        let f = write(
            "date,county,state,fips,cases,deaths\n\
             2020-03-01,Snohomish,Washington,53061,1,0\n\
             2020-03-01,King,Washington,53033,10,1\n\
             2020-03-02,Snohomish,Washington,53061,3,0\n\
             2020-03-02,King,Washington,53033,14,1\n\
             2020-03-02,Unknown,Washington,,4,0\n\
             2020-03-03,King,Washington,53033,21,2\n\
             2020-03-04,Snohomish,Washington,53061,8,1\n\
             2020-03-04,King,Washington,53033,30,3\n\
             2020-03-03,Cook,Illinois,17031,2,\n\
             2020-03-04,Cook,Illinois,17031,4,0\n",
        );
        let data = load_cases(f.path()).unwrap();
        let cid = |f: &str, s: &str| CountyId::new(f, s).unwrap();
        let expect = vec![
            CumulativeSeries::new(cid("17031", "IL"), d("2020-03-03"), vec![2, 4], vec![0, 0])
                .unwrap(),
            CumulativeSeries::new(
                cid("53033", "WA"),
                d("2020-03-01"),
                vec![10, 14, 21, 30],
                vec![1, 1, 2, 3],
            )
            .unwrap(),
            CumulativeSeries::new(
                cid("53061", "WA"),
                d("2020-03-01"),
                vec![1, 3, 3, 8],
                vec![0, 0, 0, 1],
            )
            .unwrap(),
        ];
        assert_eq!(data.series, expect);
        assert_eq!(data.dropped_rows, 1);
    }

    #[test]
    fn missing_column_is_named() {
        let f = write("date,county,state,fips,cases\n");
        match load_cases(f.path()) {
            Err(Error::Format { message, .. }) => assert!(message.contains("deaths")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn collects_all_row_errors() {
        let f = write(
            "date,county,state,fips,cases,deaths\n\
             2020-13-01,A,Alabama,01001,2,0\n\
             2020-03-02,A,Alabama,01001,x,0\n\
             2020-03-03,A,Alabama,01001,3,0\n",
        );
        match load_cases(f.path()) {
            Err(Error::Rows { errors, .. }) => {
                assert_eq!(errors.len(), 2);
                assert_eq!(errors[0].line, 2);
                assert_eq!(errors[1].line, 3);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
