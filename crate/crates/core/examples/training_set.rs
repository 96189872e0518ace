//! Two-day blocks and the parity-paired training set for one target day.
//!
//! Days with the target's parity contribute treated rows whose outcome is the
//! block's log growth; the other days contribute control rows with outcome 0,
//! described by the features of the following day.

use adaptive_growth::blocks::{block_transform, build_training_set, Arm, R_OLS};
use adaptive_growth::synth::{generate, Scenario};
use adaptive_growth::DayIndex;

fn main() -> anyhow::Result<()> {
    let scenario = Scenario { num_counties: 4, num_days: 40, ..Scenario::default() };
    let data = generate(&scenario)?;
    let blocks = block_transform(&data.panel, &data.frame)?;
    println!(
        "{} blocks ({} skipped for an invalid day), {} features each",
        blocks.len(),
        blocks.skipped(),
        blocks.num_features()
    );
    println!("features: {:?}", blocks.registry().names());

    let county = data.panel.tracks()[0].county().clone();
    println!("\nfirst blocks of {}:", county.fips());
    println!("{:>3} {:>9} {:>9} {:>9}", "day", "y0", "y1", "r_ols");
    for b in blocks.county_blocks(&county).iter().take(5) {
        println!("{:>3} {:>9.4} {:>9.4} {:>9.4}", b.day.get(), b.y0, b.y1, b.r_ols);
    }

    let target = DayIndex(25);
    let ts = build_training_set(&blocks, target)?;
    println!(
        "\ntraining set for day {}: {} rows, {} treated, {} control",
        target.get(),
        ts.len(),
        ts.count(Arm::Treated),
        ts.count(Arm::Control)
    );
    let r_col = ts.registry().position(R_OLS).expect("block features are always present");
    println!("{:>3} {:>6} {:>8} {:>9} {:>9}", "day", "fips", "arm", "outcome", "r_ols");
    for i in (0..ts.len()).filter(|&i| ts.provenance(i).1 == county).take(8) {
        let (day, c) = ts.provenance(i);
        println!(
            "{:>3} {:>6} {:>8} {:>9.4} {:>9.4}",
            day.get(),
            c.fips(),
            format!("{:?}", ts.arm(i)),
            ts.outcome(i),
            ts.feature(i, r_col)
        );
    }
    Ok(())
}
