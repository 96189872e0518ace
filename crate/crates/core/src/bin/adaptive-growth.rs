use anyhow::Context;
use clap::Parser;

use adaptive_growth::cli::{cmd_backtest, cmd_estimate, cmd_synth, with_workers, Cli, Command, NO_ESTIMATE};
use adaptive_growth::synth::Scenario;

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    with_workers(cli.workers, || run(cli.command))?
}

fn run(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Synth { scenario, seed, out } => {
            let mut s = match &scenario {
                Some(p) => Scenario::load(p)?,
                None => Scenario::default(),
            };
            if let Some(seed) = seed {
                s.seed = seed;
            }
            let data = cmd_synth(&s, &out)?;
            println!(
                "wrote {} counties x {} days to {} ({} clamped cells)",
                s.num_counties,
                s.num_days,
                out.display(),
                data.clamps
            );
        }
        Command::Backtest(args) => {
            let config = args.resolve()?;
            let report = cmd_backtest(&config).context("backtest failed")?;
            let r = &report.result;
            println!(
                "{} evaluation day(s), {} record(s), {} skipped",
                r.evaluation_days.len(),
                r.series.records.len(),
                r.skipped.len() + r.grf_failures.len()
            );
            let k = if config.ma.contains(&4) { 4 } else { config.ma.first().copied().unwrap_or(1) };
            println!("median over evaluation days ({k}-day moving average):");
            println!("{:<14} {:>10} {:>10}", "method", "RMSE", "MAPE");
            for s in adaptive_growth::eval::median_summary(&r.series.smoothed(k).records) {
                println!("{:<14} {:>10.4} {:>10.4}", s.method.to_string(), s.median_rmse, s.median_mape);
            }
            println!("outputs in {}", config.out.display());
        }
        Command::Estimate(args) => {
            let config = args.resolve()?;
            let report = cmd_estimate(&config).context("estimate failed")?;
            let with = report.rows.iter().filter(|r| r.estimate.is_some()).count();
            println!(
                "{} of {} counties estimated as of {}; top growth:",
                with,
                report.rows.len(),
                report.as_of
            );
            for r in report.rows.iter().take(10) {
                match &r.estimate {
                    Some(e) => println!("  {} {}  r_hat {:+.4}", r.county.fips(), r.county.state(), e.r_hat),
                    None => println!("  {} {}  {NO_ESTIMATE}", r.county.fips(), r.county.state()),
                }
            }
        }
    }
    Ok(())
}
