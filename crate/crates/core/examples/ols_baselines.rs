//! Fixed-window OLS growth rates around a regime switch.
//!
//! Short windows react to the switch at day 60 at once but are noisy; long
//! windows are smooth but lag behind.

use adaptive_growth::baseline::{ols_window_fit, DEFAULT_WINDOWS};
use adaptive_growth::synth::{generate, Scenario};
use adaptive_growth::DayIndex;

fn main() -> anyhow::Result<()> {
    let data = generate(&Scenario { num_counties: 1, ..Scenario::default() })?;
    let county = data.panel.tracks()[0].county().clone();
    println!("county {} (true rate 0.05, then 0.15 from day 60)", county.fips());

    print!("{:>4} {:>7}", "day", "truth");
    for w in DEFAULT_WINDOWS {
        print!(" {:>8}", format!("w={w}"));
    }
    println!();
    for t in (50..=80).step_by(2) {
        let day = DayIndex(t);
        let truth = data.true_rates[&(day, county.clone())];
        print!("{t:>4} {truth:>7.3}");
        for w in DEFAULT_WINDOWS {
            match ols_window_fit(&data.panel, &county, day, w) {
                Ok(fit) => print!(" {:>8.4}", fit.r_hat),
                Err(_) => print!(" {:>8}", "-"),
            }
        }
        println!();
    }
    Ok(())
}
