//! Forecasts from growth estimates, per-day RMSE/MAPE scoring, trailing
//! moving averages, medians, and CSV/SVG output.

mod emit;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::baseline::OlsFit;
use crate::error::{Error, Result};
use crate::grf::GrowthEstimate;
use crate::panel::{CountyId, DayIndex, IncidentPanel};
use crate::stats::median;

pub use emit::{emit_outputs, read_metric_records, read_summary, render_svg, Emitted};

pub const DEFAULT_HORIZON: usize = 7;
pub const DEFAULT_MA_WINDOWS: [usize; 5] = [3, 4, 5, 6, 7];

/// Estimator label. Orders GRF first, then OLS by window size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Grf,
    Ols(usize),
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Grf => f.write_str("GRF"),
            Method::Ols(k) => write!(f, "OLS.wsize={k}"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "GRF" {
            return Ok(Method::Grf);
        }
        s.strip_prefix("OLS.wsize=")
            .and_then(|k| k.parse().ok())
            .filter(|&k| k > 0)
            .map(Method::Ols)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method {s:?}")))
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Scale on which forecast errors are measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricScale {
    /// `ln(pred)` against `ln(truth)`.
    #[default]
    Log,
    /// Incident counts against incident counts.
    Raw,
}

impl FromStr for MetricScale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "log" => Ok(MetricScale::Log),
            "raw" => Ok(MetricScale::Raw),
            _ => Err(Error::InvalidArgument(format!("metric scale must be log or raw, got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forecast {
    pub county: CountyId,
    pub as_of_day: DayIndex,
    pub horizon: usize,
    pub ln_pred: f64,
    pub method: Method,
}

impl Forecast {
    pub fn target_day(&self) -> DayIndex {
        DayIndex::from_offset(self.as_of_day.get() + self.horizon)
    }
}

/// `ln I[t,c] + horizon * r_hat`, anchored at the last observed value.
pub fn forecast(
    panel: &IncidentPanel,
    county: &CountyId,
    t: DayIndex,
    r_hat: f64,
    horizon: usize,
    method: Method,
) -> Result<Forecast> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be >= 1".into()));
    }
    let anchor = panel.log_incident(t, county).ok_or_else(|| {
        Error::NoForecast(format!("county {} has no valid cell at day {}", county.fips(), t.get()))
    })?;
    let ln_pred = anchor + horizon as f64 * r_hat;
    if !ln_pred.is_finite() {
        return Err(Error::NoForecast(format!("non-finite prediction for county {}", county.fips())));
    }
    Ok(Forecast {
        county: county.clone(),
        as_of_day: t,
        horizon,
        ln_pred,
        method,
    })
}

pub fn forecast_grf(panel: &IncidentPanel, est: &GrowthEstimate, horizon: usize) -> Result<Forecast> {
    forecast(panel, &est.county, est.day, est.r_hat, horizon, Method::Grf)
}

pub fn forecast_ols(
    panel: &IncidentPanel,
    county: &CountyId,
    t: DayIndex,
    fit: &OlsFit,
    horizon: usize,
) -> Result<Forecast> {
    forecast(panel, county, t, fit.r_hat, horizon, Method::Ols(fit.window))
}

/// One method's scores on one evaluation day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub day: DayIndex,
    pub method: Method,
    pub rmse: f64,
    pub mape: f64,
    pub n_counties: usize,
}

/// A (day, method) pair that produced no record.
#[derive(Debug, Clone, PartialEq)]
pub struct SkippedDay {
    pub day: DayIndex,
    pub method: Method,
    pub reason: String,
}

/// Scores forecasts made on one day against the panel at `t + horizon`.
///
/// Forecasts are grouped by method; a county without valid truth is dropped
/// for that method only. MAPE excludes counties whose truth has zero magnitude
/// on the chosen scale.
pub fn score_day(
    forecasts: &[Forecast],
    panel: &IncidentPanel,
    scale: MetricScale,
) -> (Vec<MetricRecord>, Vec<SkippedDay>) {
    let mut groups: BTreeMap<(DayIndex, Method), Vec<&Forecast>> = BTreeMap::new();
    for f in forecasts {
        groups.entry((f.as_of_day, f.method)).or_default().push(f);
    }
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for ((day, method), group) in groups {
        let (mut sq, mut n) = (0.0, 0usize);
        let (mut ape, mut n_ape) = (0.0, 0usize);
        for f in group {
            let Some(ln_truth) = panel.log_incident(f.target_day(), &f.county) else {
                continue;
            };
            let (pred, truth) = match scale {
                MetricScale::Log => (f.ln_pred, ln_truth),
                MetricScale::Raw => (f.ln_pred.exp(), ln_truth.exp()),
            };
            let e = pred - truth;
            sq += e * e;
            n += 1;
            if truth != 0.0 {
                ape += e.abs() / truth.abs();
                n_ape += 1;
            }
        }
        if n == 0 || n_ape == 0 {
            skipped.push(SkippedDay {
                day,
                method,
                reason: if n == 0 {
                    "no county has valid truth at the horizon".into()
                } else {
                    "every truth value is zero on the metric scale".into()
                },
            });
            continue;
        }
        records.push(MetricRecord {
            day,
            method,
            rmse: (sq / n as f64).sqrt(),
            mape: ape / n_ape as f64,
            n_counties: n,
        });
    }
    (records, skipped)
}

/// Per-method metric records over the evaluation days.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSeries {
    /// Calendar date of day 0.
    pub origin: NaiveDate,
    /// First day with a recorded case anywhere in the panel; plots count from here.
    pub first_case_day: DayIndex,
    /// Sorted by method, then day.
    pub records: Vec<MetricRecord>,
}

impl MetricSeries {
    pub fn new(origin: NaiveDate, first_case_day: DayIndex, mut records: Vec<MetricRecord>) -> Self {
        records.sort_by_key(|r| (r.method, r.day));
        Self {
            origin,
            first_case_day,
            records,
        }
    }

    pub fn methods(&self) -> Vec<Method> {
        let mut m: Vec<Method> = self.records.iter().map(|r| r.method).collect();
        m.dedup();
        m
    }

    pub fn for_method(&self, method: Method) -> impl Iterator<Item = &MetricRecord> {
        self.records.iter().filter(move |r| r.method == method)
    }

    /// Trailing moving average; see [`moving_average`].
    pub fn smoothed(&self, k: usize) -> Self {
        Self {
            origin: self.origin,
            first_case_day: self.first_case_day,
            records: moving_average(&self.records, k),
        }
    }
}

/// First day on which any county has a positive incident count.
pub fn first_case_day(panel: &IncidentPanel) -> DayIndex {
    panel
        .tracks()
        .iter()
        .filter_map(|t| t.days().find(|&d| t.incident(d).is_some_and(|v| v > 0)))
        .min()
        .unwrap_or_default()
}

/// Trailing mean over the last `k` evaluation records of each method; the
/// first `k-1` records average the available prefix. `n_counties` is kept.
pub fn moving_average(records: &[MetricRecord], k: usize) -> Vec<MetricRecord> {
    let k = k.max(1);
    let mut by_method: BTreeMap<Method, Vec<&MetricRecord>> = BTreeMap::new();
    for r in records {
        by_method.entry(r.method).or_default().push(r);
    }
    let mut out = Vec::with_capacity(records.len());
    for (_, mut rs) in by_method {
        rs.sort_by_key(|r| r.day);
        for i in 0..rs.len() {
            let win = &rs[(i + 1).saturating_sub(k)..=i];
            let n = win.len() as f64;
            out.push(MetricRecord {
                rmse: win.iter().map(|r| r.rmse).sum::<f64>() / n,
                mape: win.iter().map(|r| r.mape).sum::<f64>() / n,
                ..rs[i].clone()
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub median_rmse: f64,
    pub median_mape: f64,
    pub n_days: usize,
}

/// Median RMSE and MAPE over evaluation days, per method.
pub fn median_summary(records: &[MetricRecord]) -> Vec<MethodSummary> {
    let mut by_method: BTreeMap<Method, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in records {
        let e = by_method.entry(r.method).or_default();
        e.0.push(r.rmse);
        e.1.push(r.mape);
    }
    by_method
        .into_iter()
        .filter_map(|(method, (mut rmse, mut mape))| {
            Some(MethodSummary {
                method,
                n_days: rmse.len(),
                median_rmse: median(&mut rmse)?,
                median_mape: median(&mut mape)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::{build_incident_panel, CumulativeSeries};
    use proptest::prelude::*;

    fn origin() -> NaiveDate {
        NaiveDate::from_ymd_opt(2020, 3, 1).unwrap()
    }

    fn county(i: usize) -> CountyId {
        CountyId::new(format!("{:05}", 1001 + i), "AL").unwrap()
    }

    fn panel(incidents: &[Vec<u64>]) -> IncidentPanel {
        let series: Vec<_> = incidents
            .iter()
            .enumerate()
            .map(|(c, inc)| {
                let cum: Vec<u64> = inc
                    .iter()
                    .scan(0, |acc, &v| {
                        *acc += v;
                        Some(*acc)
                    })
                    .collect();
                CumulativeSeries::new(county(c), origin(), cum, vec![0; inc.len()]).unwrap()
            })
            .collect();
        build_incident_panel(&series, 1).unwrap()
    }

    fn rec(day: u32, method: Method, rmse: f64, mape: f64) -> MetricRecord {
        MetricRecord { day: DayIndex(day), method, rmse, mape, n_counties: 1 }
    }

    #[test]
    fn method_labels_round_trip() {
        for m in [Method::Grf, Method::Ols(2), Method::Ols(16)] {
            assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
        }
        assert_eq!(Method::Ols(4).to_string(), "OLS.wsize=4");
        assert!("OLS.wsize=0".parse::<Method>().is_err());
        assert!(Method::Grf < Method::Ols(2) && Method::Ols(2) < Method::Ols(16));
    }

    #[test]
    fn zero_growth_and_doubling() {
        let p = panel(&[vec![100; 10]]);
        let f = forecast(&p, &county(0), DayIndex(2), 0.0, 7, Method::Grf).unwrap();
        assert_eq!(f.ln_pred, 100f64.ln());
        let f = forecast(&p, &county(0), DayIndex(2), 2f64.ln() / 7.0, 7, Method::Grf).unwrap();
        assert!((f.ln_pred.exp() - 200.0).abs() < 1e-9);
        assert_eq!(f.target_day(), DayIndex(9));
    }

    #[test]
    fn invalid_anchor_has_no_forecast() {
        let p = panel(&[vec![5, 0, 5]]);
        assert!(matches!(
            forecast(&p, &county(0), DayIndex(1), 0.1, 7, Method::Grf),
            Err(Error::NoForecast(_))
        ));
    }

    proptest! {
        #[test]
        fn forecast_formula(i in 1u64..1_000_000, r in -0.5f64..0.5) {
            let p = panel(&[vec![i, i]]);
            let f = forecast(&p, &county(0), DayIndex(1), r, 7, Method::Grf).unwrap();
            let direct = i as f64 * (7.0 * r).exp();
            prop_assert!((f.ln_pred.exp() - direct).abs() <= 1e-12 * direct);
        }
    }

    #[test]
    fn single_county_score() {
        // ln truth = 6 needs I = e^6, which is not an integer; use the formula
        // on the real truth instead.
        let p = panel(&[vec![403; 10]]);
        let truth = 403f64.ln();
        let f = Forecast { county: county(0), as_of_day: DayIndex(1), horizon: 7, ln_pred: truth + 0.3, method: Method::Grf };
        let (recs, skipped) = score_day(&[f], &p, MetricScale::Log);
        assert!(skipped.is_empty());
        assert!((recs[0].rmse - 0.3).abs() < 1e-12);
        assert!((recs[0].mape - 0.3 / truth).abs() < 1e-12);
    }

    #[test]
    fn perfect_forecasts_score_zero() {
        let p = panel(&[vec![10, 20, 40, 80, 160, 320, 640, 1280, 2560]]);
        let f = forecast(&p, &county(0), DayIndex(1), 2f64.ln(), 7, Method::Ols(2)).unwrap();
        let (recs, _) = score_day(&[f], &p, MetricScale::Log);
        assert!(recs[0].rmse < 1e-12 && recs[0].mape < 1e-12);
    }

    #[test]
    fn score_matches_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let inc: Vec<Vec<u64>> = (0..20).map(|_| (0..10).map(|_| rng.random_range(1..5000)).collect()).collect();
        let p = panel(&inc);
        let fs: Vec<Forecast> = (0..20)
            .map(|c| forecast(&p, &county(c), DayIndex(2), rng.random_range(-0.3..0.3), 7, Method::Grf).unwrap())
            .collect();
        for scale in [MetricScale::Log, MetricScale::Raw] {
            let (recs, _) = score_day(&fs, &p, scale);
            let errs: Vec<(f64, f64)> = (0..20)
                .map(|c| {
                    let truth = inc[c][9] as f64;
                    match scale {
                        MetricScale::Log => (fs[c].ln_pred - truth.ln(), truth.ln()),
                        MetricScale::Raw => (fs[c].ln_pred.exp() - truth, truth),
                    }
                })
                .filter(|&(_, t)| t != 0.0)
                .collect();
            let rmse = (errs.iter().map(|e| e.0 * e.0).sum::<f64>() / errs.len() as f64).sqrt();
            let mape = errs.iter().map(|e| e.0.abs() / e.1.abs()).sum::<f64>() / errs.len() as f64;
            assert!((recs[0].rmse - rmse).abs() <= 1e-12 * rmse.max(1.0));
            assert!((recs[0].mape - mape).abs() <= 1e-12 * mape.max(1.0));
        }
    }

    #[test]
    fn exclusion_is_per_method() {
        // county 1 has no valid truth at day 8, county 0 does
        let p = panel(&[vec![10; 9], vec![10, 10, 10, 10, 10, 10, 10, 10, 0]]);
        let mk = |c, m| forecast(&p, &county(c), DayIndex(1), 0.0, 7, m).unwrap();
        let (recs, _) = score_day(&[mk(0, Method::Grf), mk(1, Method::Grf), mk(0, Method::Ols(2))], &p, MetricScale::Log);
        assert_eq!(recs.len(), 2);
        assert!(recs.iter().all(|r| r.n_counties == 1));
        let (recs, skipped) = score_day(&[mk(1, Method::Ols(4))], &p, MetricScale::Log);
        assert!(recs.is_empty());
        assert_eq!(skipped.len(), 1);
    }

    #[test]
    fn unit_truth_excluded_from_mape() {
        let p = panel(&[vec![1; 9], vec![50; 9]]);
        let mk = |c| forecast(&p, &county(c), DayIndex(1), 0.01, 7, Method::Grf).unwrap();
        let (recs, _) = score_day(&[mk(0), mk(1)], &p, MetricScale::Log);
        assert_eq!(recs[0].n_counties, 2);
        assert!((recs[0].mape - 0.07 / 50f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn log_rmse_is_scale_free() {
        let base = vec![vec![10, 12, 15, 18, 22, 30, 33, 40, 41, 45]];
        let scaled = vec![base[0].iter().map(|v| v * 7).collect::<Vec<_>>()];
        let score = |p: &IncidentPanel| {
            let f = forecast(p, &county(0), DayIndex(2), 0.1, 7, Method::Grf).unwrap();
            score_day(&[f], p, MetricScale::Log).0[0].rmse
        };
        assert!((score(&panel(&base)) - score(&panel(&scaled))).abs() < 1e-12);
    }

    #[test]
    fn moving_average_examples() {
        let rs: Vec<_> = (0..4).map(|d| rec(d, Method::Grf, d as f64 + 1.0, 0.5)).collect();
        let ma = moving_average(&rs, 4);
        assert_eq!(ma[3].rmse, 2.5);
        assert_eq!(ma[0].rmse, 1.0);
        assert_eq!(ma[1].rmse, 1.5);
        assert!(ma.iter().all(|r| r.mape == 0.5));
    }

    proptest! {
        #[test]
        fn moving_average_matches_windows(vals in prop::collection::vec(0.0f64..10.0, 1..30), k in 1usize..8) {
            let rs: Vec<_> = vals.iter().enumerate().map(|(d, &v)| rec(2 * d as u32, Method::Ols(4), v, v / 2.0)).collect();
            let ma = moving_average(&rs, k);
            for i in 0..vals.len() {
                let lo = i.saturating_sub(k - 1);
                let want = vals[lo..=i].iter().sum::<f64>() / (i - lo + 1) as f64;
                prop_assert!((ma[i].rmse - want).abs() < 1e-12);
            }
        }

        #[test]
        fn median_never_drops_when_adding_a_maximum(vals in prop::collection::vec(0.0f64..1.0, 1..20)) {
            let rs: Vec<_> = vals.iter().enumerate().map(|(d, &v)| rec(d as u32, Method::Grf, v, v)).collect();
            let before = median_summary(&rs)[0].median_mape;
            let mut more = rs.clone();
            more.push(rec(99, Method::Grf, 2.0, 2.0));
            prop_assert!(median_summary(&more)[0].median_mape >= before);
        }
    }

    #[test]
    fn median_examples() {
        let s = median_summary(&[rec(0, Method::Grf, 0.4, 0.1)]);
        assert_eq!((s[0].median_rmse, s[0].median_mape), (0.4, 0.1));
        let s = median_summary(&[rec(0, Method::Grf, 0.1, 0.1), rec(1, Method::Grf, 0.3, 0.3)]);
        assert!((s[0].median_mape - 0.2).abs() < 1e-15);
        assert_eq!(s[0].n_days, 2);
    }

    #[test]
    fn first_case_day_skips_leading_zeros() {
        let p = panel(&[vec![0, 0, 0, 4, 5], vec![0, 0, 3, 3, 3]]);
        assert_eq!(first_case_day(&p), DayIndex(2));
    }
}
