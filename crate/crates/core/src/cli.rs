//! The `synth`, `backtest` and `estimate` commands.
//!
//! A run is described by a [`RunConfig`], read from TOML and overridden by
//! command-line flags. Every command writes the resolved configuration to
//! `config.toml` in its output directory.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::backtest::{estimate_rates, run_backtest, validate_windows, BacktestResult, BacktestSettings, RateEstimate};
use crate::baseline::DEFAULT_WINDOWS;
use crate::error::{Error, Result};
use crate::eval::{emit_outputs, Emitted, MetricScale, DEFAULT_HORIZON, DEFAULT_MA_WINDOWS};
use crate::grf::ForestParams;
use crate::ingest::{
    assemble_features, load_cases, load_cusp, load_feature_table, load_gazetteer, load_svi, load_tracking,
    FeatureFrame, FeatureSources, Manifest,
};
use crate::panel::{build_incident_panel, repair_monotonicity, DayIndex, IncidentPanel, DEFAULT_LAG};
use crate::synth::{generate, write_dataset, Scenario, SynthData};

pub const CONFIG_ECHO: &str = "config.toml";
pub const ESTIMATES_FILE: &str = "estimates.csv";
pub const MODEL_FILE: &str = "model.json";
pub const SKIPPED_FILE: &str = "skipped.csv";

/// Input files. Only `cases` is required; absent feature sources are skipped.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataPaths {
    pub cases: Option<PathBuf>,
    pub gazetteer: Option<PathBuf>,
    pub svi: Option<PathBuf>,
    pub cusp: Option<PathBuf>,
    pub tracking: Option<PathBuf>,
    /// Precomputed per-(county, date) features, e.g. from `synth`.
    pub features: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
}

/// Forest settings of a run; the seed lives at the top level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub num_trees: usize,
    pub subsample_fraction: f64,
    pub honesty_fraction: f64,
    pub mtry: Option<usize>,
    pub min_leaf: usize,
    pub max_depth: Option<usize>,
}

impl Default for ForestConfig {
    fn default() -> Self {
        let p = ForestParams::default();
        Self {
            num_trees: p.num_trees,
            subsample_fraction: p.subsample_fraction,
            honesty_fraction: p.honesty_fraction,
            mtry: p.mtry,
            min_leaf: p.min_leaf,
            max_depth: p.max_depth,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataPaths,
    pub horizon: usize,
    pub windows: Vec<usize>,
    pub lag: usize,
    pub metric_scale: MetricScale,
    /// Moving-average windows for smoothed metrics and plots.
    pub ma: Vec<usize>,
    /// First and last evaluation day indices of a backtest.
    pub eval_start: Option<u32>,
    pub eval_end: Option<u32>,
    pub stride: usize,
    /// Estimation date for `estimate`; defaults to the last day of data.
    pub as_of: Option<NaiveDate>,
    pub out: PathBuf,
    pub seed: u64,
    pub forest: ForestConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: DataPaths::default(),
            horizon: DEFAULT_HORIZON,
            windows: DEFAULT_WINDOWS.to_vec(),
            lag: DEFAULT_LAG,
            metric_scale: MetricScale::Log,
            ma: DEFAULT_MA_WINDOWS.to_vec(),
            eval_start: None,
            eval_end: None,
            stride: 1,
            as_of: None,
            out: PathBuf::from("out"),
            seed: ForestParams::default().seed,
            forest: ForestConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be >= 1".into()));
        }
        if self.lag == 0 {
            return Err(Error::InvalidArgument("lag must be >= 1".into()));
        }
        if self.stride == 0 {
            return Err(Error::InvalidArgument("stride must be >= 1".into()));
        }
        if self.ma.contains(&0) {
            return Err(Error::InvalidArgument("moving-average windows must be >= 1".into()));
        }
        validate_windows(&self.windows)?;
        self.forest_params().validate()
    }

    pub fn forest_params(&self) -> ForestParams {
        let f = &self.forest;
        ForestParams {
            num_trees: f.num_trees,
            subsample_fraction: f.subsample_fraction,
            honesty_fraction: f.honesty_fraction,
            mtry: f.mtry,
            min_leaf: f.min_leaf,
            max_depth: f.max_depth,
            seed: self.seed,
        }
    }

    pub fn backtest_settings(&self) -> BacktestSettings {
        BacktestSettings {
            horizon: self.horizon,
            windows: self.windows.clone(),
            forest: self.forest_params(),
            metric_scale: self.metric_scale,
            start: self.eval_start.map(DayIndex),
            end: self.eval_end.map(DayIndex),
            stride: self.stride,
        }
    }

    fn echo(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let p = dir.join(CONFIG_ECHO);
        fs::write(&p, self.to_toml()).map_err(|e| Error::io(&p, e))
    }
}

/// Panel and features loaded from a run's data paths.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub panel: IncidentPanel,
    pub frame: FeatureFrame,
    /// Cumulative entries raised to the running maximum.
    pub repairs: usize,
    /// Case rows without a FIPS code.
    pub dropped_rows: usize,
}

pub fn load_inputs(config: &RunConfig) -> Result<Inputs> {
    let d = &config.data;
    let cases_path = d
        .cases
        .as_deref()
        .ok_or_else(|| Error::InvalidArgument("no case file configured (data.cases)".into()))?;
    let manifest = match &d.manifest {
        Some(p) => Manifest::load(p)?,
        None => Manifest::default(),
    };
    let cases = load_cases(cases_path)?;
    let mut repairs = 0;
    let series: Vec<_> = cases
        .series
        .iter()
        .map(|s| {
            let r = repair_monotonicity(s);
            repairs += r.repairs;
            r.series
        })
        .collect();
    let panel = build_incident_panel(&series, config.lag)?;
    let sources = FeatureSources {
        gazetteer: d.gazetteer.as_deref().map(|p| load_gazetteer(p, &manifest.gazetteer)).transpose()?,
        svi: d.svi.as_deref().map(|p| load_svi(p, &manifest.svi)).transpose()?,
        cusp: d.cusp.as_deref().map(|p| load_cusp(p, &manifest.cusp)).transpose()?,
        tracking: d.tracking.as_deref().map(|p| load_tracking(p, &manifest.tracking)).transpose()?,
        table: d.features.as_deref().map(|p| load_feature_table(p, &manifest.table)).transpose()?,
    };
    let frame = assemble_features(&panel, &sources)?;
    Ok(Inputs {
        panel,
        frame,
        repairs,
        dropped_rows: cases.dropped_rows,
    })
}

/// Generates a scenario and writes cases, features, true rates and the
/// scenario into `out`.
pub fn cmd_synth(scenario: &Scenario, out: &Path) -> Result<SynthData> {
    let data = generate(scenario)?;
    write_dataset(out, &data)?;
    Ok(data)
}

#[derive(Debug, Clone)]
pub struct BacktestReport {
    pub result: BacktestResult,
    pub emitted: Emitted,
}

/// Runs a backtest and writes metrics, smoothed metrics, the summary table,
/// plots, skipped (day, method) pairs and the config echo into `config.out`.
pub fn cmd_backtest(config: &RunConfig) -> Result<BacktestReport> {
    config.validate()?;
    let inputs = load_inputs(config)?;
    let result = run_backtest(&inputs.panel, &inputs.frame, &config.backtest_settings())?;
    let emitted = emit_outputs(&config.out, &result.series, &config.ma)?;
    write_skipped(&config.out.join(SKIPPED_FILE), &result)?;
    config.echo(&config.out)?;
    Ok(BacktestReport { result, emitted })
}

fn write_skipped(path: &Path, result: &BacktestResult) -> Result<()> {
    let fmt = |e: csv::Error| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(fmt)?;
    w.write_record(["day", "method", "reason"]).map_err(fmt)?;
    for (day, reason) in &result.grf_failures {
        w.write_record([day.get().to_string(), "GRF".into(), reason.clone()]).map_err(fmt)?;
    }
    for s in &result.skipped {
        w.write_record([s.day.get().to_string(), s.method.to_string(), s.reason.clone()])
            .map_err(fmt)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone)]
pub struct EstimateReport {
    pub as_of: NaiveDate,
    pub day: DayIndex,
    pub rows: Vec<RateEstimate>,
}

/// Marker written in place of numbers for counties without an estimate.
pub const NO_ESTIMATE: &str = "NA";

/// Estimates every county's growth rate on `config.as_of` (default: last day)
/// and writes `estimates.csv`, the fitted model and the config echo.
pub fn cmd_estimate(config: &RunConfig) -> Result<EstimateReport> {
    config.validate()?;
    let inputs = load_inputs(config)?;
    let panel = &inputs.panel;
    let last = DayIndex::from_offset(panel.num_days().saturating_sub(1));
    let (as_of, day) = match config.as_of {
        None => (panel.date(last), last),
        Some(date) => {
            let day = panel.day_of(date).filter(|d| *d <= last).ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "as-of date {date} is outside the data ({} to {})",
                    panel.origin(),
                    panel.date(last)
                ))
            })?;
            (date, day)
        }
    };
    let (rows, model) = estimate_rates(panel, &inputs.frame, day, &config.forest_params(), config.horizon)?;
    fs::create_dir_all(&config.out).map_err(|e| Error::io(&config.out, e))?;
    let path = config.out.join(ESTIMATES_FILE);
    let fmt = |e: csv::Error| Error::Format {
        path: path.clone(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_path(&path).map_err(fmt)?;
    w.write_record(["fips", "state", "r_hat", "forecast_incident", "n_effective"])
        .map_err(fmt)?;
    for r in &rows {
        let numbers = match &r.estimate {
            Some(e) => [e.r_hat.to_string(), e.forecast_incident.to_string(), e.n_effective.to_string()],
            None => [NO_ESTIMATE.into(), NO_ESTIMATE.into(), NO_ESTIMATE.into()],
        };
        let mut rec = vec![r.county.fips().to_string(), r.county.state().to_string()];
        rec.extend(numbers);
        w.write_record(&rec).map_err(fmt)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    model.save(&config.out.join(MODEL_FILE))?;
    config.echo(&config.out)?;
    Ok(EstimateReport { as_of, day, rows })
}

/// Command-line interface of the `adaptive-growth` binary.
#[derive(Debug, Parser)]
#[command(name = "adaptive-growth", version, about = "County-level growth-rate estimation with honest causal forests")]
pub struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with known growth rates.
    Synth {
        /// Scenario TOML; defaults to the built-in regime-switch scenario.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "synth")]
        out: PathBuf,
    },
    /// Rolling forecast backtest of GRF against fixed-window OLS.
    Backtest(RunArgs),
    /// Growth-rate estimates for every county on one day.
    Estimate(RunArgs),
}

/// Flags shared by `backtest` and `estimate`; each overrides the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Run configuration TOML.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Case file (date,county,state,fips,cases,deaths).
    #[arg(long)]
    pub cases: Option<PathBuf>,
    /// Per-(county, date) feature table.
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long)]
    pub gazetteer: Option<PathBuf>,
    #[arg(long)]
    pub svi: Option<PathBuf>,
    #[arg(long)]
    pub cusp: Option<PathBuf>,
    #[arg(long)]
    pub tracking: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Estimation date (YYYY-MM-DD).
    #[arg(long)]
    pub as_of: Option<NaiveDate>,
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Comma-separated OLS window sizes.
    #[arg(long, value_delimiter = ',')]
    pub windows: Option<Vec<usize>>,
    #[arg(long)]
    pub lag: Option<usize>,
    #[arg(long)]
    pub trees: Option<usize>,
    #[arg(long)]
    pub min_leaf: Option<usize>,
    #[arg(long)]
    pub subsample: Option<f64>,
    #[arg(long)]
    pub honesty: Option<f64>,
    #[arg(long)]
    pub mtry: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated moving-average windows.
    #[arg(long, value_delimiter = ',')]
    pub ma: Option<Vec<usize>>,
    /// `log` or `raw`.
    #[arg(long)]
    pub metric_scale: Option<MetricScale>,
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long)]
    pub eval_start: Option<u32>,
    #[arg(long)]
    pub eval_end: Option<u32>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl RunArgs {
    /// The config file (or defaults) with every given flag applied.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let d = &mut c.data;
        for (slot, flag) in [
            (&mut d.cases, &self.cases),
            (&mut d.features, &self.features),
            (&mut d.gazetteer, &self.gazetteer),
            (&mut d.svi, &self.svi),
            (&mut d.cusp, &self.cusp),
            (&mut d.tracking, &self.tracking),
            (&mut d.manifest, &self.manifest),
        ] {
            if flag.is_some() {
                slot.clone_from(flag);
            }
        }
        if self.as_of.is_some() {
            c.as_of = self.as_of;
        }
        if let Some(v) = self.horizon {
            c.horizon = v;
        }
        if let Some(v) = &self.windows {
            c.windows.clone_from(v);
        }
        if let Some(v) = self.lag {
            c.lag = v;
        }
        if let Some(v) = self.trees {
            c.forest.num_trees = v;
        }
        if let Some(v) = self.min_leaf {
            c.forest.min_leaf = v;
        }
        if let Some(v) = self.subsample {
            c.forest.subsample_fraction = v;
        }
        if let Some(v) = self.honesty {
            c.forest.honesty_fraction = v;
        }
        if self.mtry.is_some() {
            c.forest.mtry = self.mtry;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = &self.ma {
            c.ma.clone_from(v);
        }
        if let Some(v) = self.metric_scale {
            c.metric_scale = v;
        }
        if let Some(v) = self.stride {
            c.stride = v;
        }
        if self.eval_start.is_some() {
            c.eval_start = self.eval_start;
        }
        if self.eval_end.is_some() {
            c.eval_end = self.eval_end;
        }
        if let Some(v) = &self.out {
            c.out.clone_from(v);
        }
        c.validate()?;
        Ok(c)
    }
}

/// Runs `f` on a pool of `workers` threads, or on the global pool.
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(0) => Err(Error::InvalidArgument("workers must be >= 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(|pool| pool.install(f))
            .map_err(|e| Error::InvalidArgument(format!("cannot start {n} workers: {e}"))),
    }
}
