//! Rolling forecast backtests and single-day rate estimation.
//!
//! For each evaluation day `t` the forest is refit on the training set for
//! target `t` (only data through `t`), every OLS window is fitted, and all
//! methods forecast `t + horizon` from the same anchor `ln I[t,c]`.

use rayon::prelude::*;

use crate::baseline::{track_window_fit, DEFAULT_WINDOWS};
use crate::blocks::{block_transform, build_training_set, BlockSet};
use crate::error::{Error, Result};
use crate::eval::{
    first_case_day, forecast, score_day, Forecast, Method, MetricRecord, MetricScale, MetricSeries,
    SkippedDay, DEFAULT_HORIZON,
};
use crate::grf::{fit_forest, FittedModel, ForestParams};
use crate::ingest::FeatureFrame;
use crate::panel::{CountyId, DayIndex, IncidentPanel};

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestSettings {
    pub horizon: usize,
    pub windows: Vec<usize>,
    pub forest: ForestParams,
    pub metric_scale: MetricScale,
    /// First evaluation day; defaults to the largest window.
    pub start: Option<DayIndex>,
    /// Last evaluation day; defaults to the last day with truth at the horizon.
    pub end: Option<DayIndex>,
    /// Evaluate every `stride`-th day.
    pub stride: usize,
}

impl Default for BacktestSettings {
    fn default() -> Self {
        Self {
            horizon: DEFAULT_HORIZON,
            windows: DEFAULT_WINDOWS.to_vec(),
            forest: ForestParams::default(),
            metric_scale: MetricScale::Log,
            start: None,
            end: None,
            stride: 1,
        }
    }
}

impl BacktestSettings {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be >= 1".into()));
        }
        if self.stride == 0 {
            return Err(Error::InvalidArgument("stride must be >= 1".into()));
        }
        validate_windows(&self.windows)?;
        self.forest.validate()
    }

    /// Evaluation days for a panel of `num_days` days.
    pub fn evaluation_days(&self, num_days: usize) -> Vec<DayIndex> {
        let max_w = self.windows.iter().copied().max().unwrap_or(2);
        let start = self.start.map_or(max_w, |d| d.get()).max(1);
        let last = match num_days.checked_sub(1 + self.horizon) {
            Some(l) => l,
            None => return Vec::new(),
        };
        let end = self.end.map_or(last, |d| d.get().min(last));
        (start..=end)
            .step_by(self.stride)
            .map(DayIndex::from_offset)
            .collect()
    }
}

pub(crate) fn validate_windows(windows: &[usize]) -> Result<()> {
    if windows.is_empty() {
        return Err(Error::InvalidArgument("at least one OLS window is required".into()));
    }
    let mut sorted = windows.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != windows.len() || sorted[0] == 0 {
        return Err(Error::InvalidArgument(
            "windows must be distinct positive integers".into(),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct BacktestResult {
    pub series: MetricSeries,
    pub skipped: Vec<SkippedDay>,
    pub evaluation_days: Vec<DayIndex>,
    /// Days the forest could not be fit for, with the reason.
    pub grf_failures: Vec<(DayIndex, String)>,
}

/// Forecasts of every method made on day `t`.
pub fn forecasts_for_day(
    panel: &IncidentPanel,
    blocks: &BlockSet,
    t: DayIndex,
    settings: &BacktestSettings,
) -> (Vec<Forecast>, Option<String>) {
    let mut out = Vec::new();
    let mut failure = None;
    match build_training_set(blocks, t).and_then(|ts| fit_forest(&ts, &settings.forest).map(|f| (ts, f))) {
        Ok((ts, forest)) => {
            for track in panel.tracks() {
                let Some(block) = blocks.get(t, track.county()) else {
                    continue;
                };
                let Ok(p) = forest.predict(&ts, &block.features.values) else {
                    continue;
                };
                if let Ok(f) = forecast(panel, track.county(), t, p.r_hat, settings.horizon, Method::Grf) {
                    out.push(f);
                }
            }
        }
        Err(e) => failure = Some(e.to_string()),
    }
    for track in panel.tracks() {
        for &w in &settings.windows {
            let Ok(fit) = track_window_fit(track, t, w) else {
                continue;
            };
            if let Ok(f) = forecast(panel, track.county(), t, fit.r_hat, settings.horizon, Method::Ols(w)) {
                out.push(f);
            }
        }
    }
    (out, failure)
}

/// Runs the rolling backtest. Days are processed in parallel; results are
/// ordered by method and day, so they do not depend on the worker count.
pub fn run_backtest(
    panel: &IncidentPanel,
    frame: &FeatureFrame,
    settings: &BacktestSettings,
) -> Result<BacktestResult> {
    settings.validate()?;
    let blocks = block_transform(panel, frame)?;
    let days = settings.evaluation_days(panel.num_days());
    let per_day: Vec<(Vec<MetricRecord>, Vec<SkippedDay>, Option<String>)> = days
        .par_iter()
        .map(|&t| {
            let (forecasts, failure) = forecasts_for_day(panel, &blocks, t, settings);
            let (records, skipped) = score_day(&forecasts, panel, settings.metric_scale);
            (records, skipped, failure)
        })
        .collect();
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    let mut grf_failures = Vec::new();
    for (&t, (r, s, f)) in days.iter().zip(per_day) {
        records.extend(r);
        skipped.extend(s);
        if let Some(f) = f {
            grf_failures.push((t, f));
        }
    }
    if records.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no scorable evaluation day among {} candidate day(s)",
            days.len()
        )));
    }
    Ok(BacktestResult {
        series: MetricSeries::new(panel.origin(), first_case_day(panel), records),
        skipped,
        evaluation_days: days,
        grf_failures,
    })
}

/// One county's row of the estimate table.
#[derive(Debug, Clone, PartialEq)]
pub struct RateEstimate {
    pub county: CountyId,
    /// `None` when the county has no block ending on the as-of day.
    pub estimate: Option<CountyRate>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CountyRate {
    pub r_hat: f64,
    /// `I[t] * exp(horizon * r_hat)`.
    pub forecast_incident: f64,
    pub n_effective: f64,
}

/// Growth rates of every county on day `t`, sorted by `r_hat` descending
/// (ties by FIPS), counties without an estimate last in FIPS order.
pub fn estimate_rates(
    panel: &IncidentPanel,
    frame: &FeatureFrame,
    t: DayIndex,
    params: &ForestParams,
    horizon: usize,
) -> Result<(Vec<RateEstimate>, FittedModel)> {
    if t.get() >= panel.num_days() {
        return Err(Error::InvalidArgument(format!(
            "as-of day {} is outside the data (last day {})",
            t.get(),
            panel.num_days().saturating_sub(1)
        )));
    }
    let blocks = block_transform(panel, frame)?;
    let ts = build_training_set(&blocks, t)?;
    let forest = fit_forest(&ts, params)?;
    let mut rows: Vec<RateEstimate> = panel
        .tracks()
        .par_iter()
        .map(|track| {
            let county = track.county().clone();
            let estimate = blocks.get(t, &county).and_then(|b| {
                let p = forest.predict(&ts, &b.features.values).ok()?;
                let f = forecast(panel, &county, t, p.r_hat, horizon, Method::Grf).ok()?;
                Some(CountyRate {
                    r_hat: p.r_hat,
                    forecast_incident: f.ln_pred.exp(),
                    n_effective: p.support as f64,
                })
            });
            RateEstimate { county, estimate }
        })
        .collect();
    rows.sort_by(|a, b| match (&a.estimate, &b.estimate) {
        (Some(x), Some(y)) => y
            .r_hat
            .total_cmp(&x.r_hat)
            .then_with(|| a.county.fips().cmp(b.county.fips())),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.county.fips().cmp(b.county.fips()),
    });
    Ok((rows, FittedModel::new(ts, forest)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, Scenario};

    fn noiseless(rate: f64) -> Scenario {
        Scenario {
            num_counties: 6,
            num_days: 50,
            base_rate: rate,
            regimes: vec![],
            sigma: 0.0,
            initial_level: [1e8, 1e9],
            num_distractors: 1,
            ..Default::default()
        }
    }

    fn quick() -> BacktestSettings {
        BacktestSettings {
            forest: ForestParams { num_trees: 20, ..Default::default() },
            stride: 3,
            ..Default::default()
        }
    }

    #[test]
    fn evaluation_days_respect_bounds() {
        let s = BacktestSettings { stride: 2, ..Default::default() };
        let d = s.evaluation_days(30);
        assert_eq!(d.first(), Some(&DayIndex(16)));
        assert_eq!(d.last(), Some(&DayIndex(22)));
        assert!(s.evaluation_days(10).is_empty());
        let s = BacktestSettings { start: Some(DayIndex(3)), end: Some(DayIndex(5)), ..Default::default() };
        assert_eq!(s.evaluation_days(30), vec![DayIndex(3), DayIndex(4), DayIndex(5)]);
    }

    #[test]
    fn window_validation() {
        assert!(validate_windows(&[2, 4]).is_ok());
        assert!(validate_windows(&[]).is_err());
        assert!(validate_windows(&[2, 2]).is_err());
        assert!(validate_windows(&[0, 2]).is_err());
    }

    #[test]
    fn noiseless_backtest_is_near_exact() {
        let d = generate(&noiseless(0.08)).unwrap();
        let r = run_backtest(&d.panel, &d.frame, &quick()).unwrap();
        assert_eq!(r.series.methods().len(), 5);
        for rec in &r.series.records {
            assert!(rec.mape < 1e-6, "{rec:?}");
        }
    }

    #[test]
    fn too_short_panel_has_nothing_to_score() {
        let d = generate(&Scenario { num_days: 12, ..noiseless(0.05) }).unwrap();
        assert!(matches!(
            run_backtest(&d.panel, &d.frame, &quick()),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn estimates_sorted_and_accurate() {
        let d = generate(&noiseless(0.03)).unwrap();
        let params = ForestParams { num_trees: 20, ..Default::default() };
        let (rows, model) = estimate_rates(&d.panel, &d.frame, DayIndex(40), &params, 7).unwrap();
        assert_eq!(rows.len(), 6);
        assert_eq!(model.forest.trees.len(), 20);
        for w in rows.windows(2) {
            let (a, b) = (w[0].estimate.as_ref().unwrap(), w[1].estimate.as_ref().unwrap());
            assert!(a.r_hat > b.r_hat || (a.r_hat == b.r_hat && w[0].county.fips() < w[1].county.fips()));
        }
        for r in &rows {
            assert!((r.estimate.as_ref().unwrap().r_hat - 0.03).abs() < 1e-7);
        }
        assert!(estimate_rates(&d.panel, &d.frame, DayIndex(500), &params, 7).is_err());
    }
}
