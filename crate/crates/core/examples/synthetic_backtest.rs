//! Backtest GRF against fixed-window OLS on a synthetic regime-switch panel.
//!
//! Usage: cargo run --release --example synthetic_backtest -- [seed] [trees]

use adaptive_growth::backtest::{run_backtest, BacktestSettings};
use adaptive_growth::eval::median_summary;
use adaptive_growth::grf::ForestParams;
use adaptive_growth::synth::{generate, Scenario};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1);
    let trees: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(300);

    let scenario = Scenario { seed, ..Scenario::default() };
    let data = generate(&scenario)?;
    println!(
        "{} counties x {} days, switch at day 60 (0.05 -> 0.15), {} clamped cells",
        scenario.num_counties, scenario.num_days, data.clamps
    );

    let settings = BacktestSettings {
        stride: 2,
        forest: ForestParams { num_trees: trees, seed, ..Default::default() },
        ..Default::default()
    };
    let started = std::time::Instant::now();
    let result = run_backtest(&data.panel, &data.frame, &settings)?;
    println!(
        "{} evaluation days in {:.1}s",
        result.evaluation_days.len(),
        started.elapsed().as_secs_f64()
    );

    println!("{:<14} {:>12} {:>12}", "method", "median RMSE", "median MAPE");
    for s in median_summary(&result.series.records) {
        println!("{:<14} {:>12.5} {:>12.5}", s.method, s.median_rmse, s.median_mape);
    }

    println!("\nper-day MAPE around the switch:");
    let methods = result.series.methods();
    print!("{:>4}", "day");
    for m in &methods {
        print!(" {:>12}", m.to_string());
    }
    println!();
    for &t in &result.evaluation_days {
        if !(40..=80).contains(&t.get()) {
            continue;
        }
        print!("{:>4}", t.get());
        for &m in &methods {
            let v = result.series.for_method(m).find(|r| r.day == t).map(|r| r.mape);
            print!(" {:>12.5}", v.unwrap_or(f64::NAN));
        }
        println!();
    }
    Ok(())
}
