//! Synthetic county panels with known growth rates.
//!
//! Each county's latent incident curve grows exponentially at a rate that
//! changes at regime switch days for the counties a regime affects. Observed
//! incidents are `round(latent * exp(sigma * z))`. The cumulative series is
//! rebuilt by inverting the incident definition, so the incident panel built
//! with the scenario's lag reproduces the observed incidents.
//!
//! Every regime contributes a 0/1 indicator feature that is 1 from its switch
//! day on in affected counties; `num_distractors` standard-normal columns add
//! features with no signal.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{assemble_features, write_feature_table, FeatureFrame, FeatureSources, FeatureTable};
use crate::panel::{build_incident_panel, CountyId, CumulativeSeries, DayIndex, IncidentPanel, DEFAULT_LAG};

/// Largest count representable exactly in an `f64`.
const MAX_COUNT: u64 = 1 << 53;

const STATES: [(&str, &str); 6] = [
    ("01", "AL"),
    ("06", "CA"),
    ("12", "FL"),
    ("17", "IL"),
    ("36", "NY"),
    ("48", "TX"),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Regime {
    /// First day whose growth (from the previous day) uses `new_rate`.
    pub switch_day: u32,
    pub new_rate: f64,
    /// Share of counties the regime applies to, drawn per county.
    #[serde(default = "one")]
    pub affected_fraction: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub num_counties: usize,
    pub num_days: usize,
    pub base_rate: f64,
    pub regimes: Vec<Regime>,
    /// Standard deviation of the log-normal observation noise.
    pub sigma: f64,
    /// Day-0 latent incident levels are log-uniform on this range.
    pub initial_level: [f64; 2],
    pub num_distractors: usize,
    pub lag: usize,
    pub start_date: NaiveDate,
    pub seed: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            num_counties: 200,
            num_days: 120,
            base_rate: 0.05,
            regimes: vec![Regime {
                switch_day: 60,
                new_rate: 0.15,
                affected_fraction: 1.0,
            }],
            sigma: 0.05,
            initial_level: [200.0, 2000.0],
            num_distractors: 2,
            lag: DEFAULT_LAG,
            start_date: NaiveDate::from_ymd_opt(2020, 3, 1).expect("valid date"),
            seed: 1,
        }
    }
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let s: Scenario = toml::from_str(&text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Scenario(m));
        if self.num_counties == 0 || self.num_counties > STATES.len() * 500 {
            return bad(format!("num_counties must be in 1..={}", STATES.len() * 500));
        }
        if self.num_days < 2 {
            return bad("num_days must be >= 2".into());
        }
        if self.lag == 0 {
            return bad("lag must be >= 1".into());
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be >= 0, got {}", self.sigma));
        }
        let [lo, hi] = self.initial_level;
        if !(lo >= 1.0 && hi >= lo && hi.is_finite()) {
            return bad(format!("initial_level must satisfy 1 <= lo <= hi, got [{lo}, {hi}]"));
        }
        let rates = std::iter::once(self.base_rate).chain(self.regimes.iter().map(|r| r.new_rate));
        for r in rates {
            if !(-0.5..=0.5).contains(&r) {
                return bad(format!("rate {r} outside [-0.5, 0.5]"));
            }
        }
        for w in self.regimes.windows(2) {
            if w[1].switch_day <= w[0].switch_day {
                return bad("regime switch days must be strictly increasing".into());
            }
        }
        for r in &self.regimes {
            if !(0.0..=1.0).contains(&r.affected_fraction) {
                return bad(format!("affected_fraction {} outside [0, 1]", r.affected_fraction));
            }
        }
        Ok(())
    }

    pub fn county(&self, index: usize) -> CountyId {
        let (state_fips, state) = STATES[index % STATES.len()];
        let number = 2 * (index / STATES.len()) + 1;
        CountyId::new(format!("{state_fips}{number:03}"), state).expect("valid synthetic fips")
    }

    /// Feature column names in frame order.
    pub fn feature_names(&self) -> Vec<String> {
        let regimes = (1..=self.regimes.len()).map(|k| format!("regime_{k}"));
        let noise = (1..=self.num_distractors).map(|k| format!("noise_{k}"));
        regimes.chain(noise).collect()
    }
}

/// Output of [`generate`].
#[derive(Debug, Clone)]
pub struct SynthData {
    pub scenario: Scenario,
    /// Monotone cumulative series, one per county.
    pub series: Vec<CumulativeSeries>,
    pub features: FeatureTable,
    pub frame: FeatureFrame,
    pub panel: IncidentPanel,
    /// Growth rate from day `t-1` to day `t`, for `t >= 1`.
    pub true_rates: BTreeMap<(DayIndex, CountyId), f64>,
    /// Observed incidents raised to keep the cumulative series monotone.
    pub clamps: usize,
}

struct CountySim {
    county: CountyId,
    cumulative: Vec<u64>,
    features: Vec<Vec<f64>>,
    rates: Vec<f64>,
    clamps: usize,
}

fn simulate(s: &Scenario, index: usize) -> Result<CountySim> {
    let county = s.county(index);
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    rng.set_stream(index as u64 + 1);

    let [lo, hi] = s.initial_level;
    let level = (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp();
    let affected: Vec<bool> = s
        .regimes
        .iter()
        .map(|r| rng.random::<f64>() < r.affected_fraction)
        .collect();

    let n = s.num_days;
    let mut rates = vec![s.base_rate; n];
    let mut features = vec![vec![0.0; s.regimes.len() + s.num_distractors]; n];
    for t in 0..n {
        for (k, r) in s.regimes.iter().enumerate() {
            if affected[k] && t as u32 >= r.switch_day {
                rates[t] = r.new_rate;
                features[t][k] = 1.0;
            }
        }
        for j in 0..s.num_distractors {
            features[t][s.regimes.len() + j] = rng.sample(StandardNormal);
        }
    }

    let overflow = |t: usize| {
        Error::Scenario(format!(
            "county {} exceeds 2^53 cases by day {t}; lower the rates, initial levels or number of days",
            county.fips()
        ))
    };
    let mut ln_latent = level.ln();
    let mut incident = Vec::with_capacity(n);
    for (t, &rate) in rates.iter().enumerate() {
        if t > 0 {
            ln_latent += rate;
        }
        let z: f64 = if s.sigma > 0.0 { rng.sample(StandardNormal) } else { 0.0 };
        let obs = (ln_latent + s.sigma * z).exp().round();
        if obs.is_nan() || obs >= MAX_COUNT as f64 {
            return Err(overflow(t));
        }
        incident.push(obs as u64);
    }

    // Y[t] = I[t] while t < lag; afterwards the daily count n[t] = Y[t] - Y[t-1]
    // satisfies n[t] = I[t] - I[t-1] + n[t-lag].
    let mut cumulative: Vec<u64> = Vec::with_capacity(n);
    let mut daily: Vec<u64> = Vec::with_capacity(n);
    let mut clamps = 0;
    for t in 0..n {
        let prev = if t == 0 { 0 } else { cumulative[t - 1] };
        let mut i_t = incident[t];
        let new = if t < s.lag {
            if i_t < prev {
                i_t = prev;
                clamps += 1;
            }
            i_t - prev
        } else {
            let carry = daily[t - s.lag];
            let floor = incident[t - 1].saturating_sub(carry);
            if i_t < floor {
                i_t = floor;
                clamps += 1;
            }
            i_t + carry - incident[t - 1]
        };
        incident[t] = i_t;
        let y = prev.checked_add(new).filter(|&y| y < MAX_COUNT).ok_or_else(|| overflow(t))?;
        daily.push(new);
        cumulative.push(y);
    }
    Ok(CountySim {
        county,
        cumulative,
        features,
        rates,
        clamps,
    })
}

/// Generates the scenario. Counties use disjoint RNG streams of the seed, so
/// output does not depend on thread count.
pub fn generate(scenario: &Scenario) -> Result<SynthData> {
    scenario.validate()?;
    let sims = (0..scenario.num_counties)
        .into_par_iter()
        .map(|c| simulate(scenario, c))
        .collect::<Result<Vec<_>>>()?;

    let mut features = FeatureTable {
        columns: scenario.feature_names(),
        rows: BTreeMap::new(),
    };
    let mut true_rates = BTreeMap::new();
    let mut series = Vec::with_capacity(sims.len());
    let mut clamps = 0;
    for sim in sims {
        for (t, values) in sim.features.into_iter().enumerate() {
            let date = DayIndex::from_offset(t).to_date(scenario.start_date);
            features
                .rows
                .insert((sim.county.fips().to_string(), date), values.into_iter().map(Some).collect());
            if t > 0 {
                true_rates.insert((DayIndex::from_offset(t), sim.county.clone()), sim.rates[t]);
            }
        }
        clamps += sim.clamps;
        let deaths = vec![0; sim.cumulative.len()];
        series.push(CumulativeSeries::new(sim.county, scenario.start_date, sim.cumulative, deaths)?);
    }
    series.sort_by(|a, b| a.county.cmp(&b.county));
    let panel = build_incident_panel(&series, scenario.lag)?;
    let frame = assemble_features(
        &panel,
        &FeatureSources {
            table: Some(features.clone()),
            ..Default::default()
        },
    )?;
    Ok(SynthData {
        scenario: scenario.clone(),
        series,
        features,
        frame,
        panel,
        true_rates,
        clamps,
    })
}

/// Writes series in the `date,county,state,fips,cases,deaths` layout read by
/// [`crate::ingest::load_cases`].
pub fn write_cases(path: &Path, series: &[CumulativeSeries]) -> Result<()> {
    let fmt = |e: csv::Error| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(fmt)?;
    w.write_record(["date", "county", "state", "fips", "cases", "deaths"])
        .map_err(fmt)?;
    let mut rows: Vec<(NaiveDate, &CumulativeSeries, usize)> = series
        .iter()
        .flat_map(|s| (0..s.len()).map(move |i| (DayIndex::from_offset(i).to_date(s.origin_date), s, i)))
        .collect();
    rows.sort_by(|a, b| (a.0, a.1.county.fips()).cmp(&(b.0, b.1.county.fips())));
    for (date, s, i) in rows {
        w.write_record([
            date.to_string(),
            format!("Synthetic {}", s.county.fips()),
            s.county.state().to_string(),
            s.county.fips().to_string(),
            s.cases[i].to_string(),
            s.deaths[i].to_string(),
        ])
        .map_err(fmt)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_true_rates(path: &Path, data: &SynthData) -> Result<()> {
    let fmt = |e: csv::Error| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(fmt)?;
    w.write_record(["day", "date", "fips", "rate"]).map_err(fmt)?;
    for ((day, county), rate) in &data.true_rates {
        w.write_record([
            day.get().to_string(),
            day.to_date(data.scenario.start_date).to_string(),
            county.fips().to_string(),
            rate.to_string(),
        ])
        .map_err(fmt)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// File names written by [`write_dataset`].
pub const CASES_FILE: &str = "cases.csv";
pub const FEATURES_FILE: &str = "features.csv";
pub const TRUE_RATES_FILE: &str = "true_rates.csv";
pub const SCENARIO_FILE: &str = "scenario.toml";

/// Writes cases, features, true rates and the scenario itself into `dir`.
pub fn write_dataset(dir: &Path, data: &SynthData) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_cases(&dir.join(CASES_FILE), &data.series)?;
    write_feature_table(&dir.join(FEATURES_FILE), &data.features)?;
    write_true_rates(&dir.join(TRUE_RATES_FILE), data)?;
    let p = dir.join(SCENARIO_FILE);
    std::fs::write(&p, data.scenario.to_toml()).map_err(|e| Error::io(&p, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baseline::ols_window_fit;
    use crate::ingest::{load_cases, load_feature_table, TableManifest};

    fn small(sigma: f64) -> Scenario {
        Scenario {
            num_counties: 12,
            num_days: 60,
            base_rate: 0.1,
            regimes: vec![],
            sigma,
            initial_level: [1e8, 1e9],
            num_distractors: 1,
            ..Default::default()
        }
    }

    #[test]
    fn noiseless_differences_are_the_rate() {
        let d = generate(&small(0.0)).unwrap();
        assert_eq!(d.clamps, 0);
        for track in d.panel.tracks() {
            for t in 1..60 {
                let a = track.log_incident(DayIndex(t - 1)).unwrap();
                let b = track.log_incident(DayIndex(t)).unwrap();
                assert!((b - a - 0.1).abs() < 1e-7, "{}", b - a);
            }
        }
    }

    #[test]
    fn panel_reproduces_observed_incidents() {
        let s = Scenario { num_counties: 20, sigma: 0.2, ..Default::default() };
        let d = generate(&s).unwrap();
        assert!(d.series.iter().all(CumulativeSeries::is_monotone));
        // the incident panel equals a direct windowed difference of the cumulative
        for (series, track) in d.series.iter().zip(d.panel.tracks()) {
            for t in 0..series.len() {
                let want = if t >= s.lag { series.cases[t] - series.cases[t - s.lag] } else { series.cases[t] };
                assert_eq!(track.incident(DayIndex::from_offset(t)), Some(want));
            }
        }
    }

    #[test]
    fn switch_shows_in_rates_and_features() {
        let s = Scenario { num_counties: 6, sigma: 0.0, ..Default::default() };
        let d = generate(&s).unwrap();
        let c = s.county(0);
        assert_eq!(d.true_rates[&(DayIndex(59), c.clone())], 0.05);
        assert_eq!(d.true_rates[&(DayIndex(60), c.clone())], 0.15);
        let reg = d.frame.registry().position("regime_1").unwrap();
        assert_eq!(d.frame.row(DayIndex(59), &c).unwrap().values[reg], 0.0);
        assert_eq!(d.frame.row(DayIndex(60), &c).unwrap().values[reg], 1.0);
    }

    #[test]
    fn partial_regimes_leave_other_counties_alone() {
        let s = Scenario {
            num_counties: 60,
            regimes: vec![Regime { switch_day: 30, new_rate: -0.05, affected_fraction: 0.5 }],
            sigma: 0.0,
            ..Default::default()
        };
        let d = generate(&s).unwrap();
        let switched = (0..60)
            .filter(|&i| d.true_rates[&(DayIndex(40), s.county(i))] == -0.05)
            .count();
        assert!(switched > 10 && switched < 50, "{switched}");
    }

    #[test]
    fn deterministic_and_independent_of_threads() {
        let s = Scenario { num_counties: 30, ..Default::default() };
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| generate(&s).unwrap())
        };
        let (a, b) = (run(1), run(4));
        assert_eq!(a.series, b.series);
        assert_eq!(a.features, b.features);
        // county streams do not depend on how many counties there are
        let fewer = generate(&Scenario { num_counties: 10, ..s.clone() }).unwrap();
        for s in &fewer.series {
            assert!(a.series.contains(s));
        }
    }

    #[test]
    fn monte_carlo_rates_within_three_se() {
        let s = Scenario::default();
        let d = generate(&s).unwrap();
        for regime_rate in [0.05, 0.15] {
            let diffs: Vec<f64> = d
                .true_rates
                .iter()
                .filter(|(_, &r)| r == regime_rate)
                .filter_map(|((day, c), _)| {
                    let a = d.panel.log_incident(day.prev()?, c)?;
                    let b = d.panel.log_incident(*day, c)?;
                    Some(b - a)
                })
                .collect();
            let n = diffs.len() as f64;
            let mean = diffs.iter().sum::<f64>() / n;
            let sd = (diffs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            let se = sd / n.sqrt();
            assert!((mean - regime_rate).abs() < 3.0 * se, "rate {regime_rate}: mean {mean}, se {se}");
        }
    }

    #[test]
    fn noiseless_ols_recovers_rate() {
        let d = generate(&small(0.0)).unwrap();
        for c in d.panel.counties() {
            for w in [2, 4, 8, 16] {
                let f = ols_window_fit(&d.panel, c, DayIndex(40), w).unwrap();
                assert!((f.r_hat - 0.1).abs() < 1e-9, "{}", f.r_hat);
            }
        }
    }

    #[test]
    fn overflow_is_reported() {
        let s = Scenario { base_rate: 0.5, num_days: 120, initial_level: [1e6, 1e6], regimes: vec![], ..Default::default() };
        assert!(matches!(generate(&s), Err(Error::Scenario(_))));
    }

    #[test]
    fn validation() {
        let ok = Scenario::default();
        assert!(ok.validate().is_ok());
        assert!(Scenario { sigma: -1.0, ..ok.clone() }.validate().is_err());
        assert!(Scenario { base_rate: 0.6, ..ok.clone() }.validate().is_err());
        let twice = vec![ok.regimes[0].clone(), ok.regimes[0].clone()];
        assert!(Scenario { regimes: twice, ..ok.clone() }.validate().is_err());
    }

    #[test]
    fn written_dataset_loads_back() {
        let d = generate(&Scenario { num_counties: 8, num_days: 30, ..Default::default() }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &d).unwrap();
        let cases = load_cases(&dir.path().join(CASES_FILE)).unwrap();
        assert_eq!(cases.series, d.series);
        let table = load_feature_table(&dir.path().join(FEATURES_FILE), &TableManifest::default()).unwrap();
        assert_eq!(table, d.features);
        let s = Scenario::load(&dir.path().join(SCENARIO_FILE)).unwrap();
        assert_eq!(s, d.scenario);
    }
}
