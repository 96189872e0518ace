//! Calendar-aligned county panels: cumulative series, incident counts and their logs.

use std::collections::BTreeMap;
use std::fmt;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default incident window, in days.
pub const DEFAULT_LAG: usize = 22;

/// A county, keyed by its 5-digit FIPS code.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CountyId {
    fips: String,
    state: String,
}

impl CountyId {
    pub fn new(fips: impl Into<String>, state: impl Into<String>) -> Result<Self> {
        let fips = fips.into();
        let state = state.into();
        if fips.len() != 5 || !fips.bytes().all(|b| b.is_ascii_digit()) {
            return Err(Error::InvalidArgument(format!(
                "fips must be 5 digits, got {fips:?}"
            )));
        }
        if state.len() != 2 || !state.bytes().all(|b| b.is_ascii_uppercase()) {
            return Err(Error::InvalidArgument(format!(
                "state must be a 2-letter uppercase code, got {state:?}"
            )));
        }
        Ok(Self { fips, state })
    }

    pub fn fips(&self) -> &str {
        &self.fips
    }

    pub fn state(&self) -> &str {
        &self.state
    }
}

impl fmt::Display for CountyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.fips, self.state)
    }
}

/// Day offset from the panel's calendar origin.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
pub struct DayIndex(pub u32);

impl DayIndex {
    pub fn get(self) -> usize {
        self.0 as usize
    }

    pub fn from_offset(offset: usize) -> Self {
        DayIndex(u32::try_from(offset).expect("day offset fits in u32"))
    }

    pub fn from_date(origin: NaiveDate, date: NaiveDate) -> Option<Self> {
        let days = (date - origin).num_days();
        u32::try_from(days).ok().map(DayIndex)
    }

    pub fn to_date(self, origin: NaiveDate) -> NaiveDate {
        origin + chrono::Days::new(u64::from(self.0))
    }

    pub fn prev(self) -> Option<Self> {
        self.0.checked_sub(1).map(DayIndex)
    }

    pub fn next(self) -> Self {
        DayIndex(self.0 + 1)
    }
}

impl fmt::Display for DayIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Daily cumulative cases and deaths for one county, starting at `origin_date`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CumulativeSeries {
    pub county: CountyId,
    pub origin_date: NaiveDate,
    pub cases: Vec<u64>,
    pub deaths: Vec<u64>,
}

impl CumulativeSeries {
    pub fn new(
        county: CountyId,
        origin_date: NaiveDate,
        cases: Vec<u64>,
        deaths: Vec<u64>,
    ) -> Result<Self> {
        if cases.len() != deaths.len() {
            return Err(Error::InvalidArgument(format!(
                "{county}: {} case entries but {} death entries",
                cases.len(),
                deaths.len()
            )));
        }
        Ok(Self {
            county,
            origin_date,
            cases,
            deaths,
        })
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    pub fn is_monotone(&self) -> bool {
        is_non_decreasing(&self.cases) && is_non_decreasing(&self.deaths)
    }
}

fn is_non_decreasing(v: &[u64]) -> bool {
    v.windows(2).all(|w| w[0] <= w[1])
}

/// Result of [`repair_monotonicity`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Repaired {
    pub series: CumulativeSeries,
    /// Number of case and death entries raised to the running maximum.
    pub repairs: usize,
}

/// Replaces downward revisions by the running maximum of cases and deaths.
pub fn repair_monotonicity(raw: &CumulativeSeries) -> Repaired {
    fn running_max(v: &[u64], repairs: &mut usize) -> Vec<u64> {
        let mut best = 0;
        v.iter()
            .enumerate()
            .map(|(i, &x)| {
                if i == 0 || x > best {
                    best = x;
                } else if x < best {
                    *repairs += 1;
                }
                best
            })
            .collect()
    }
    let mut repairs = 0;
    let cases = running_max(&raw.cases, &mut repairs);
    let deaths = running_max(&raw.deaths, &mut repairs);
    Repaired {
        series: CumulativeSeries {
            county: raw.county.clone(),
            origin_date: raw.origin_date,
            cases,
            deaths,
        },
        repairs,
    }
}

/// Incident counts for one county, stored from its first observed day.
#[derive(Debug, Clone, PartialEq)]
pub struct CountyTrack {
    county: CountyId,
    start: DayIndex,
    incident: Vec<u64>,
    /// `ln(incident)`, NaN where the cell is invalid.
    log_incident: Vec<f64>,
}

impl CountyTrack {
    pub fn county(&self) -> &CountyId {
        &self.county
    }

    /// First day with an observation.
    pub fn start(&self) -> DayIndex {
        self.start
    }

    /// One past the last observed day.
    pub fn end(&self) -> DayIndex {
        DayIndex::from_offset(self.start.get() + self.incident.len())
    }

    pub fn len(&self) -> usize {
        self.incident.len()
    }

    pub fn is_empty(&self) -> bool {
        self.incident.is_empty()
    }

    fn offset(&self, day: DayIndex) -> Option<usize> {
        let i = day.get().checked_sub(self.start.get())?;
        (i < self.incident.len()).then_some(i)
    }

    pub fn incident(&self, day: DayIndex) -> Option<u64> {
        self.offset(day).map(|i| self.incident[i])
    }

    pub fn log_incident(&self, day: DayIndex) -> Option<f64> {
        let v = self.log_incident[self.offset(day)?];
        (!v.is_nan()).then_some(v)
    }

    pub fn is_valid(&self, day: DayIndex) -> bool {
        self.log_incident(day).is_some()
    }

    /// Observed days in order.
    pub fn days(&self) -> impl Iterator<Item = DayIndex> + '_ {
        (self.start.get()..self.end().get()).map(DayIndex::from_offset)
    }
}

/// Per-county, per-day incident counts `I[t,c]` on a shared calendar.
#[derive(Debug, Clone, PartialEq)]
pub struct IncidentPanel {
    origin: NaiveDate,
    num_days: usize,
    lag: usize,
    tracks: Vec<CountyTrack>,
    index: BTreeMap<CountyId, usize>,
}

impl IncidentPanel {
    /// Calendar date of `DayIndex(0)`.
    pub fn origin(&self) -> NaiveDate {
        self.origin
    }

    pub fn num_days(&self) -> usize {
        self.num_days
    }

    pub fn lag(&self) -> usize {
        self.lag
    }

    /// County tracks sorted by county id.
    pub fn tracks(&self) -> &[CountyTrack] {
        &self.tracks
    }

    pub fn counties(&self) -> impl Iterator<Item = &CountyId> {
        self.tracks.iter().map(|t| &t.county)
    }

    pub fn num_counties(&self) -> usize {
        self.tracks.len()
    }

    pub fn track(&self, county: &CountyId) -> Option<&CountyTrack> {
        self.index.get(county).map(|&i| &self.tracks[i])
    }

    pub fn county_position(&self, county: &CountyId) -> Option<usize> {
        self.index.get(county).copied()
    }

    pub fn incident(&self, day: DayIndex, county: &CountyId) -> Option<u64> {
        self.track(county)?.incident(day)
    }

    pub fn log_incident(&self, day: DayIndex, county: &CountyId) -> Option<f64> {
        self.track(county)?.log_incident(day)
    }

    pub fn is_valid(&self, day: DayIndex, county: &CountyId) -> bool {
        self.log_incident(day, county).is_some()
    }

    pub fn date(&self, day: DayIndex) -> NaiveDate {
        day.to_date(self.origin)
    }

    pub fn day_of(&self, date: NaiveDate) -> Option<DayIndex> {
        DayIndex::from_date(self.origin, date).filter(|d| d.get() < self.num_days)
    }
}

/// Builds the incident panel `I_t = Y_t - Y_{t-lag}` (or `Y_t` during the first
/// `lag` days of a county's series).
///
/// Series must already be monotone; see [`repair_monotonicity`].
pub fn build_incident_panel(series_set: &[CumulativeSeries], lag: usize) -> Result<IncidentPanel> {
    if series_set.is_empty() {
        return Err(Error::EmptyInput("no cumulative series".into()));
    }
    if lag == 0 {
        return Err(Error::InvalidArgument("incident lag must be >= 1".into()));
    }
    let mut index = BTreeMap::new();
    for (i, s) in series_set.iter().enumerate() {
        if !s.is_monotone() {
            return Err(Error::ContractViolation(format!(
                "{}: cumulative series is not monotone; repair it first",
                s.county
            )));
        }
        if index.insert(s.county.clone(), i).is_some() {
            return Err(Error::ContractViolation(format!(
                "{}: duplicate series",
                s.county
            )));
        }
    }
    let origin = series_set
        .iter()
        .map(|s| s.origin_date)
        .min()
        .expect("non-empty");

    let mut tracks: Vec<CountyTrack> = index
        .values()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&&i| {
            let s = &series_set[i];
            let start = DayIndex::from_date(origin, s.origin_date).expect("origin is the minimum");
            let incident: Vec<u64> = (0..s.cases.len())
                .map(|t| {
                    if t >= lag {
                        s.cases[t] - s.cases[t - lag]
                    } else {
                        s.cases[t]
                    }
                })
                .collect();
            let log_incident = incident
                .iter()
                .map(|&v| if v >= 1 { (v as f64).ln() } else { f64::NAN })
                .collect();
            CountyTrack {
                county: s.county.clone(),
                start,
                incident,
                log_incident,
            }
        })
        .collect();
    tracks.sort_by(|a, b| a.county.cmp(&b.county));
    let index = tracks
        .iter()
        .enumerate()
        .map(|(i, t)| (t.county.clone(), i))
        .collect();
    let num_days = tracks.iter().map(|t| t.end().get()).max().unwrap_or(0);
    Ok(IncidentPanel {
        origin,
        num_days,
        lag,
        tracks,
        index,
    })
}
