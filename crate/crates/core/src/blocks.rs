//! Two-day blocks and the parity-paired training set for a target day.
//!
//! A block `(t-1, t)` of county `c` carries the normalized outcomes
//! `y1 = ln I[t] - ln I[t-1]`, `y0 = 0`, the OLS line through `(0, y0)` and
//! `(1, y1)`, and the features `X[t,c]` extended by that line and `I[t-1,c]`.
//!
//! For a target day `t*`, days with the parity of `t*` contribute their block as
//! a treated row (`W = 1`, `Y = y1`); days of the other parity contribute a
//! control row (`W = 0`, `Y = 0`) carrying the features of the following day's
//! block. The difference of arm means over any pooled set of pairs is then the
//! average one-day log growth over those blocks.

use std::ops::Range;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{FeatureFrame, FeatureRegistry, FeatureVector, Provenance};
use crate::panel::{CountyId, DayIndex, IncidentPanel};

pub const R_OLS: &str = "block.r_ols";
pub const ALPHA_OLS: &str = "block.alpha_ols";
pub const PREV_INCIDENT: &str = "block.prev_incident";

#[derive(Debug, Clone, PartialEq)]
pub struct BlockRecord {
    /// The later day `t` of the block.
    pub day: DayIndex,
    pub county: CountyId,
    pub y1: f64,
    pub y0: f64,
    pub r_ols: f64,
    pub alpha_ols: f64,
    pub prev_incident: u64,
    /// `X[t,c]` followed by `r_ols`, `alpha_ols`, `prev_incident`.
    pub features: FeatureVector,
}

/// Slope and intercept of the OLS line through `(0, y0)` and `(1, y1)`.
pub fn two_point_ols(y0: f64, y1: f64) -> (f64, f64) {
    (y1 - y0, y0)
}

/// All blocks of a panel, sorted by (county, day).
#[derive(Debug, Clone)]
pub struct BlockSet {
    registry: Arc<FeatureRegistry>,
    blocks: Vec<BlockRecord>,
    county_ranges: Vec<(CountyId, Range<usize>)>,
    skipped: usize,
}

impl BlockSet {
    pub fn registry(&self) -> &Arc<FeatureRegistry> {
        &self.registry
    }

    pub fn blocks(&self) -> &[BlockRecord] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Consecutive-day pairs skipped because either day was invalid.
    pub fn skipped(&self) -> usize {
        self.skipped
    }

    pub fn num_features(&self) -> usize {
        self.registry.len()
    }

    /// Blocks of each county, in county order.
    pub fn by_county(&self) -> impl Iterator<Item = (&CountyId, &[BlockRecord])> {
        self.county_ranges
            .iter()
            .map(|(c, r)| (c, &self.blocks[r.clone()]))
    }

    pub fn county_blocks(&self, county: &CountyId) -> &[BlockRecord] {
        match self.county_ranges.binary_search_by(|(c, _)| c.cmp(county)) {
            Ok(i) => &self.blocks[self.county_ranges[i].1.clone()],
            Err(_) => &[],
        }
    }

    pub fn get(&self, day: DayIndex, county: &CountyId) -> Option<&BlockRecord> {
        find(self.county_blocks(county), day)
    }
}

fn find(blocks: &[BlockRecord], day: DayIndex) -> Option<&BlockRecord> {
    blocks
        .binary_search_by_key(&day, |b| b.day)
        .ok()
        .map(|i| &blocks[i])
}

/// Builds one block per county and per consecutive pair of valid days.
pub fn block_transform(panel: &IncidentPanel, frame: &FeatureFrame) -> Result<BlockSet> {
    let mut registry = (**frame.registry()).clone();
    for name in [R_OLS, ALPHA_OLS, PREV_INCIDENT] {
        registry.push(name, Provenance::Derived)?;
    }
    let registry = Arc::new(registry);

    let mut blocks = Vec::new();
    let mut county_ranges = Vec::new();
    let mut skipped = 0;
    for track in panel.tracks() {
        let county = track.county();
        let first = blocks.len();
        for day in track.days().skip(1) {
            let prev = day.prev().expect("day > start");
            let (Some(now), Some(before)) = (track.log_incident(day), track.log_incident(prev))
            else {
                skipped += 1;
                continue;
            };
            let row = frame.row(day, county).ok_or_else(|| {
                Error::ContractViolation(format!("no feature row for {county} on day {day}"))
            })?;
            let y1 = now - before;
            let y0 = 0.0;
            let (r_ols, alpha_ols) = two_point_ols(y0, y1);
            let prev_incident = track.incident(prev).expect("valid day");
            let mut values = Vec::with_capacity(registry.len());
            values.extend_from_slice(row.values);
            values.extend([r_ols, alpha_ols, prev_incident as f64]);
            let mut missing = Vec::with_capacity(registry.len());
            missing.extend_from_slice(row.missing);
            missing.extend([false; 3]);
            blocks.push(BlockRecord {
                day,
                county: county.clone(),
                y1,
                y0,
                r_ols,
                alpha_ols,
                prev_incident,
                features: FeatureVector {
                    values,
                    missing,
                    registry: Arc::clone(&registry),
                },
            });
        }
        county_ranges.push((county.clone(), first..blocks.len()));
    }
    Ok(BlockSet {
        registry,
        blocks,
        county_ranges,
        skipped,
    })
}

/// Treatment arm of a training row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Arm {
    Control,
    Treated,
}

impl Arm {
    pub fn indicator(self) -> f64 {
        match self {
            Arm::Control => 0.0,
            Arm::Treated => 1.0,
        }
    }
}

/// Parity-paired (feature, outcome, treatment) rows for one target day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSet {
    target_day: DayIndex,
    registry: Arc<FeatureRegistry>,
    features: Vec<f64>,
    outcomes: Vec<f64>,
    arms: Vec<Arm>,
    provenance: Vec<(DayIndex, CountyId)>,
}

impl TrainingSet {
    /// Assembles a training set from raw rows; mostly useful for tests and
    /// for reloading a saved model.
    pub fn from_rows(
        target_day: DayIndex,
        registry: Arc<FeatureRegistry>,
        rows: Vec<(Vec<f64>, f64, Arm, DayIndex, CountyId)>,
    ) -> Result<Self> {
        let m = registry.len();
        let mut ts = TrainingSet {
            target_day,
            registry,
            features: Vec::with_capacity(rows.len() * m),
            outcomes: Vec::with_capacity(rows.len()),
            arms: Vec::with_capacity(rows.len()),
            provenance: Vec::with_capacity(rows.len()),
        };
        for (x, y, w, day, county) in rows {
            if x.len() != m {
                return Err(Error::InvalidArgument(format!(
                    "row has {} features, registry has {m}",
                    x.len()
                )));
            }
            ts.features.extend(x);
            ts.outcomes.push(y);
            ts.arms.push(w);
            ts.provenance.push((day, county));
        }
        Ok(ts)
    }

    pub fn target_day(&self) -> DayIndex {
        self.target_day
    }

    pub fn registry(&self) -> &Arc<FeatureRegistry> {
        &self.registry
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.registry.len()
    }

    pub fn features(&self, row: usize) -> &[f64] {
        let m = self.num_features();
        &self.features[row * m..(row + 1) * m]
    }

    pub fn feature(&self, row: usize, j: usize) -> f64 {
        self.features[row * self.num_features() + j]
    }

    pub fn outcome(&self, row: usize) -> f64 {
        self.outcomes[row]
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.outcomes
    }

    pub fn arm(&self, row: usize) -> Arm {
        self.arms[row]
    }

    pub fn arms(&self) -> &[Arm] {
        &self.arms
    }

    /// (day, county) the row was built from; for control rows this is the
    /// control day itself, whose features come from the following day.
    pub fn provenance(&self, row: usize) -> &(DayIndex, CountyId) {
        &self.provenance[row]
    }

    pub fn count(&self, arm: Arm) -> usize {
        self.arms.iter().filter(|&&a| a == arm).count()
    }
}

/// Builds the congruence-class training set for target day `t_star` from the
/// blocks with day `<= t_star`. Rows are ordered by county, then day.
pub fn build_training_set(blocks: &BlockSet, t_star: DayIndex) -> Result<TrainingSet> {
    if t_star.0 < 1 {
        return Err(Error::InvalidArgument("target day must be >= 1".into()));
    }
    let mut ts = TrainingSet {
        target_day: t_star,
        registry: Arc::clone(&blocks.registry),
        features: Vec::new(),
        outcomes: Vec::new(),
        arms: Vec::new(),
        provenance: Vec::new(),
    };
    let parity = t_star.0 % 2;
    for (county, cblocks) in blocks.by_county() {
        let upto = cblocks.partition_point(|b| b.day <= t_star);
        let cblocks = &cblocks[..upto];
        let Some(first) = cblocks.first() else {
            continue;
        };
        // Control day t needs block t+1, so the scan starts one day early.
        let lo = first.day.0.saturating_sub(1);
        for t in lo..=t_star.0 {
            let day = DayIndex(t);
            if t % 2 == parity {
                if let Some(b) = find(cblocks, day) {
                    ts.features.extend_from_slice(&b.features.values);
                    ts.outcomes.push(b.y1);
                    ts.arms.push(Arm::Treated);
                    ts.provenance.push((day, county.clone()));
                }
            } else if let Some(b) = find(cblocks, day.next()) {
                ts.features.extend_from_slice(&b.features.values);
                ts.outcomes.push(b.y0);
                ts.arms.push(Arm::Control);
                ts.provenance.push((day, county.clone()));
            }
        }
    }
    if ts.is_empty() {
        return Err(Error::InsufficientHistory { t_star });
    }
    Ok(ts)
}
