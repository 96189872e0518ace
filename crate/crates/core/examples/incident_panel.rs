//! Cumulative counts to incident cases and log incidents.
//!
//! A reporting correction (a cumulative count that goes down) is raised to
//! the running maximum first. Incidents are `Y[t] - Y[t-lag]`; zero cells are
//! invalid and have no log value.

use adaptive_growth::panel::{build_incident_panel, repair_monotonicity};
use adaptive_growth::{CountyId, CumulativeSeries, DayIndex};
use chrono::NaiveDate;

fn main() -> anyhow::Result<()> {
    let origin = NaiveDate::from_ymd_opt(2020, 3, 1).unwrap();
    let county = CountyId::new("36061", "NY")?;
    let cumulative = vec![3, 5, 9, 8, 16, 27, 27, 40, 61, 88, 130, 190];
    let raw = CumulativeSeries::new(county.clone(), origin, cumulative, vec![0; 12])?;
    let repaired = repair_monotonicity(&raw);
    println!("{} cumulative entries raised to the running maximum", repaired.repairs);

    // A short lag keeps the example small; the default is 22 days.
    let lag = 3;
    let panel = build_incident_panel(&[repaired.series], lag)?;
    println!("{:>3} {:>10} {:>8} {:>8}", "day", "date", "I", "ln I");
    for t in 0..panel.num_days() {
        let day = DayIndex::from_offset(t);
        let inc = panel.incident(day, &county).unwrap_or(0);
        let ln = panel
            .log_incident(day, &county)
            .map_or("invalid".to_string(), |v| format!("{v:.4}"));
        println!("{:>3} {:>10} {:>8} {:>8}", t, panel.date(day), inc, ln);
    }
    Ok(())
}
