//! Adaptive fitting windows for epidemic growth-rate estimation.
//!
//! County-level incident case counts are turned into two-day blocks, pooled
//! across counties and history by an honest causal forest, and the resulting
//! instantaneous growth rates are benchmarked against fixed-window OLS fits
//! through 7-day-ahead forecast backtests.
//!
//! The pipeline, bottom to top:
//!
//! * [`panel`]: cumulative series, the 22-day incident transformation, log views.
//! * [`ingest`]: case counts and county/state feature datasets, joined into a
//!   [`ingest::FeatureFrame`].
//! * [`blocks`]: block transformation and the parity-paired training set for a
//!   target day.
//! * [`grf`]: the honest causal forest.
//! * [`baseline`]: fixed-window OLS growth rates.
//! * [`eval`]: forecasts, RMSE/MAPE scoring, smoothing, medians, CSV/SVG output.
//! * [`backtest`]: rolling backtests and single-day rate estimates.
//! * [`synth`]: synthetic panels with known growth rates.
//! * [`cli`]: the `synth`, `backtest` and `estimate` commands.

pub mod backtest;
pub mod baseline;
pub mod blocks;
pub mod cli;
pub mod error;
pub mod eval;
pub mod grf;
pub mod ingest;
pub mod panel;
pub mod synth;

mod stats;

pub use error::{Error, Result, RowError};
pub use panel::{CountyId, CumulativeSeries, DayIndex, IncidentPanel};
