//! Score a backtest and write metric tables and plots.
//!
//! Usage: cargo run --release --example metrics_and_plots -- [out_dir]

use std::path::PathBuf;

use adaptive_growth::backtest::{run_backtest, BacktestSettings};
use adaptive_growth::eval::{emit_outputs, read_summary, DEFAULT_MA_WINDOWS};
use adaptive_growth::grf::ForestParams;
use adaptive_growth::synth::{generate, Scenario};

fn main() -> anyhow::Result<()> {
    let out = std::env::args().nth(1).map_or_else(|| PathBuf::from("metrics_out"), PathBuf::from);
    let data = generate(&Scenario { num_counties: 60, ..Scenario::default() })?;
    let settings = BacktestSettings {
        forest: ForestParams { num_trees: 100, ..ForestParams::default() },
        stride: 3,
        ..BacktestSettings::default()
    };
    let result = run_backtest(&data.panel, &data.frame, &settings)?;
    let emitted = emit_outputs(&out, &result.series, &DEFAULT_MA_WINDOWS)?;
    println!("wrote {} metric table(s) and {} plot(s) to {}", emitted.metrics.len(), emitted.plots.len(), out.display());

    println!("{:<14} {:>3} {:>10} {:>10}", "method", "ma", "RMSE", "MAPE");
    for (ma, s) in read_summary(&emitted.summary)? {
        if ma == 1 || ma == 4 {
            println!("{:<14} {:>3} {:>10.4} {:>10.4}", s.method.to_string(), ma, s.median_rmse, s.median_mape);
        }
    }
    Ok(())
}
