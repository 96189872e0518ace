use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use super::{
    CountyFeatures, CuspTable, FeatureFrame, FeatureRegistry, FeatureTable, Gazetteer, Provenance,
    SviTable, TrackingTable,
};
use crate::error::{Error, Result};
use crate::panel::IncidentPanel;
use crate::stats::median;

/// Loaded feature datasets; any may be absent.
#[derive(Debug, Clone, Default)]
pub struct FeatureSources {
    pub gazetteer: Option<Gazetteer>,
    pub svi: Option<SviTable>,
    pub cusp: Option<CuspTable>,
    pub tracking: Option<TrackingTable>,
    /// Precomputed per-(county, date) features.
    pub table: Option<FeatureTable>,
}

enum Getter {
    Lat,
    Lon,
    Svi(usize),
    Cusp(String),
    Tracking(usize),
    Table(usize),
}

/// Joins all sources onto every observed (day, county) cell of the panel.
///
/// County features join by FIPS; state features join by (date, state) and are
/// inherited by every county of the state. Columns with no present value are
/// dropped. Missing cells take the column median over present cells, and each
/// column with any missing cell gets a 0/1 `<name>.missing` indicator column.
pub fn assemble_features(panel: &IncidentPanel, sources: &FeatureSources) -> Result<FeatureFrame> {
    if panel.num_counties() == 0 {
        return Err(Error::EmptyInput("panel has no counties".into()));
    }
    let state_sources: Vec<BTreeSet<&str>> = [
        sources.cusp.as_ref().map(|c| c.states.iter().map(String::as_str).collect()),
        sources
            .tracking
            .as_ref()
            .map(|t| t.rows.keys().map(|(_, s)| s.as_str()).collect()),
    ]
    .into_iter()
    .flatten()
    .collect();
    if !state_sources.is_empty() {
        let unknown: Vec<&str> = panel
            .counties()
            .filter(|c| !state_sources.iter().any(|s| s.contains(c.state())))
            .map(|c| c.fips())
            .collect();
        if !unknown.is_empty() {
            return Err(Error::Assembly(format!(
                "counties whose state appears in no state-level source: {}",
                unknown.join(", ")
            )));
        }
    }

    let mut columns: Vec<(String, Provenance, Getter)> = Vec::new();
    if sources.gazetteer.is_some() {
        columns.push(("gaz.lat".into(), Provenance::Gazetteer, Getter::Lat));
        columns.push(("gaz.lon".into(), Provenance::Gazetteer, Getter::Lon));
    }
    if let Some(svi) = &sources.svi {
        for (j, c) in svi.columns.iter().enumerate() {
            columns.push((format!("svi.{c}"), Provenance::Svi, Getter::Svi(j)));
        }
    }
    if let Some(cusp) = &sources.cusp {
        for p in &cusp.policies {
            columns.push((format!("cusp.{p}"), Provenance::Cusp, Getter::Cusp(p.clone())));
        }
    }
    if let Some(tr) = &sources.tracking {
        for (j, c) in tr.columns.iter().enumerate() {
            columns.push((format!("tracking.{c}"), Provenance::Tracking, Getter::Tracking(j)));
        }
    }
    if let Some(tb) = &sources.table {
        for (j, c) in tb.columns.iter().enumerate() {
            columns.push((c.clone(), Provenance::Derived, Getter::Table(j)));
        }
    }
    let m0 = columns.len();

    // Raw values, county-major then day-major, as in the final frame.
    let mut raw: Vec<Vec<Option<f64>>> = Vec::with_capacity(panel.num_counties());
    for track in panel.tracks() {
        let county = track.county();
        let svi_row = sources.svi.as_ref().and_then(|s| s.rows.get(county.fips()));
        let centroid = sources.gazetteer.as_ref().and_then(|g| g.centroids.get(county.fips()));
        let has_cusp = sources.cusp.as_ref().is_some_and(|c| c.states.contains(county.state()));
        let mut cells = Vec::with_capacity(track.len() * m0);
        for day in track.days() {
            let date = panel.date(day);
            let tracking_row = sources.tracking.as_ref().and_then(|t| t.get(date, county.state()));
            let table_row = sources
                .table
                .as_ref()
                .and_then(|t| t.rows.get(&(county.fips().to_string(), date)));
            for (_, _, getter) in &columns {
                cells.push(match getter {
                    Getter::Lat => centroid.map(|c| c.latitude),
                    Getter::Lon => centroid.map(|c| c.longitude),
                    Getter::Svi(j) => svi_row.and_then(|r| r[*j]),
                    Getter::Cusp(p) => has_cusp.then(|| {
                        let active = sources.cusp.as_ref().unwrap().is_active(county.state(), p, date);
                        f64::from(u8::from(active))
                    }),
                    Getter::Tracking(j) => tracking_row.and_then(|r| r[*j]),
                    Getter::Table(j) => table_row.and_then(|r| r[*j]),
                });
            }
        }
        raw.push(cells);
    }

    let mut present: Vec<Vec<f64>> = vec![Vec::new(); m0];
    let mut any_missing = vec![false; m0];
    for cells in &raw {
        for (i, v) in cells.iter().enumerate() {
            match v {
                Some(x) => present[i % m0].push(*x),
                None => any_missing[i % m0] = true,
            }
        }
    }
    let kept: Vec<usize> = (0..m0).filter(|&j| !present[j].is_empty()).collect();
    let dropped: Vec<String> = (0..m0)
        .filter(|&j| present[j].is_empty())
        .map(|j| columns[j].0.clone())
        .collect();
    let col_median: Vec<f64> = present
        .iter_mut()
        .map(|p| median(p).unwrap_or(0.0))
        .collect();
    let masked: Vec<usize> = kept.iter().copied().filter(|&j| any_missing[j]).collect();

    let mut registry = FeatureRegistry::new();
    let mut medians = Vec::new();
    for &j in &kept {
        registry.push(columns[j].0.clone(), columns[j].1)?;
        medians.push(col_median[j]);
    }
    for &j in &masked {
        registry.push(format!("{}.missing", columns[j].0), Provenance::Derived)?;
        medians.push(0.0);
    }
    let m = registry.len();

    let mut counties = BTreeMap::new();
    for (track, cells) in panel.tracks().iter().zip(raw) {
        let days = track.len();
        let mut values = Vec::with_capacity(days * m);
        let mut missing = Vec::with_capacity(days * m);
        for row in cells.chunks(m0.max(1)).take(days) {
            for &j in &kept {
                values.push(row.get(j).copied().flatten().unwrap_or(col_median[j]));
                missing.push(row.get(j).is_some_and(Option::is_none));
            }
            for &j in &masked {
                values.push(if row[j].is_none() { 1.0 } else { 0.0 });
                missing.push(false);
            }
        }
        // A frame with no columns still has one (empty) row per cell.
        counties.insert(
            track.county().clone(),
            CountyFeatures {
                start: track.start(),
                days,
                values,
                missing,
            },
        );
    }
    Ok(FeatureFrame {
        registry: Arc::new(registry),
        counties,
        dropped,
        medians,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Centroid, PolicyInterval};
    use crate::panel::{build_incident_panel, CountyId, CumulativeSeries, DayIndex};
    use chrono::NaiveDate;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn panel() -> IncidentPanel {
        let mk = |f: &str, s: &str, start: &str, n: usize| {
            let cases: Vec<u64> = (1..=n as u64).collect();
            CumulativeSeries::new(CountyId::new(f, s).unwrap(), d(start), cases, vec![0; n]).unwrap()
        };
        build_incident_panel(
            &[
                mk("01001", "AL", "2020-04-01", 4),
                mk("01003", "AL", "2020-04-02", 3),
                mk("06037", "CA", "2020-04-01", 4),
            ],
            22,
        )
        .unwrap()
    }

    fn sources() -> FeatureSources {
        let mut gaz = Gazetteer::default();
        gaz.centroids.insert("01001".into(), Centroid { latitude: 32.5, longitude: -86.6 });
        gaz.centroids.insert("06037".into(), Centroid { latitude: 34.3, longitude: -118.2 });
        let mut svi = SviTable { columns: vec!["theme".into(), "never".into()], ..Default::default() };
        svi.rows.insert("01001".into(), vec![Some(0.2), None]);
        svi.rows.insert("01003".into(), vec![Some(0.6), None]);
        svi.rows.insert("06037".into(), vec![None, None]);
        let mut cusp = CuspTable { policies: vec!["mask".into()], ..Default::default() };
        cusp.states.extend(["AL".to_string(), "CA".to_string()]);
        cusp.intervals.insert(
            ("AL".into(), "mask".into()),
            vec![PolicyInterval { start: d("2020-04-03"), end: None }],
        );
        let mut tracking = TrackingTable { columns: vec!["tests".into()], ..Default::default() };
        tracking.rows.insert((d("2020-04-01"), "AL".into()), vec![Some(10.0)]);
        tracking.rows.insert((d("2020-04-02"), "AL".into()), vec![Some(30.0)]);
        tracking.rows.insert((d("2020-04-01"), "CA".into()), vec![Some(50.0)]);
        FeatureSources {
            gazetteer: Some(gaz),
            svi: Some(svi),
            cusp: Some(cusp),
            tracking: Some(tracking),
            table: None,
        }
    }

    #[test]
    fn joins_inherits_and_imputes() {
        let p = panel();
        let frame = assemble_features(&p, &sources()).unwrap();
        assert_eq!(frame.dropped_columns(), &["svi.never".to_string()]);
        let names = frame.registry().names().to_vec();
        assert_eq!(
            names,
            vec![
                "gaz.lat",
                "gaz.lon",
                "svi.theme",
                "cusp.mask",
                "tracking.tests",
                "gaz.lat.missing",
                "gaz.lon.missing",
                "svi.theme.missing",
                "tracking.tests.missing"
            ]
        );
        let a = CountyId::new("01001", "AL").unwrap();
        let b = CountyId::new("01003", "AL").unwrap();
        let c = CountyId::new("06037", "CA").unwrap();
        // Every observed cell has an entry.
        for t in p.tracks() {
            for day in t.days() {
                assert!(frame.row(day, t.county()).is_some());
            }
            assert!(frame.row(t.end(), t.county()).is_none());
        }
        // State inheritance: same state, same CUSP/tracking slice.
        for day in 1..3 {
            let ra = frame.row(DayIndex(day), &a).unwrap();
            let rb = frame.row(DayIndex(day), &b).unwrap();
            assert_eq!(ra.values[3..5], rb.values[3..5]);
        }
        assert_eq!(frame.row(DayIndex(1), &a).unwrap().values[3], 0.0);
        assert_eq!(frame.row(DayIndex(2), &a).unwrap().values[3], 1.0);
        assert_eq!(frame.row(DayIndex(2), &c).unwrap().values[3], 0.0);
        // Imputation by brute-force medians over present cells.
        let oracle = |col: usize| {
            let mut v: Vec<f64> = frame
                .iter()
                .filter(|(_, _, r)| !r.missing[col])
                .map(|(_, _, r)| r.values[col])
                .collect();
            v.sort_by(f64::total_cmp);
            let n = v.len();
            if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 }
        };
        let mut imputed = 0;
        for (_, _, r) in frame.iter() {
            for col in 0..5 {
                if r.missing[col] {
                    imputed += 1;
                    assert_eq!(r.values[col], oracle(col));
                    assert_eq!(r.values[5 + [0, 1, 2, 4].iter().position(|&k| k == col).unwrap()], 1.0);
                }
            }
        }
        assert!(imputed > 0);
        // lat present on 8 cells: 4 x 32.5, 4 x 34.3 -> median 33.4
        assert!((frame.medians()[0] - 33.4).abs() < 1e-12);
    }

    #[test]
    fn unknown_state_is_listed() {
        let p = panel();
        let mut s = sources();
        s.cusp.as_mut().unwrap().states.remove("CA");
        s.tracking.as_mut().unwrap().rows.retain(|(_, st), _| st != "CA");
        match assemble_features(&p, &s) {
            Err(Error::Assembly(m)) => assert!(m.contains("06037")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn deterministic() {
        let p = panel();
        assert_eq!(
            assemble_features(&p, &sources()).unwrap(),
            assemble_features(&p, &sources()).unwrap()
        );
    }
}
