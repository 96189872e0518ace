//! Load case counts and feature datasets and join them into a feature frame.
//!
//! Writes a tiny set of input files to a temporary directory: cases, county
//! centroids, an SVI table, state policy dates and state testing counts.

use std::fs;

use adaptive_growth::cli::{load_inputs, RunConfig};
use adaptive_growth::DayIndex;

const CASES: &str = "date,county,state,fips,cases,deaths
2020-04-01,Autauga,Alabama,01001,10,0
2020-04-02,Autauga,Alabama,01001,14,0
2020-04-03,Autauga,Alabama,01001,20,1
2020-04-04,Autauga,Alabama,01001,29,1
2020-04-02,Baldwin,Alabama,01003,5,0
2020-04-03,Baldwin,Alabama,01003,9,0
2020-04-04,Baldwin,Alabama,01003,16,0
2020-04-01,Los Angeles,California,06037,300,5
2020-04-02,Los Angeles,California,06037,380,6
2020-04-04,Los Angeles,California,06037,610,9
2020-04-03,Unknown,California,,12,0
";

const GAZETTEER: &str = "GEOID\tINTPTLAT\tINTPTLONG
01001\t32.53\t-86.64
01003\t30.73\t-87.72
06037\t34.32\t-118.22
";

const SVI: &str = "ST,STCNTY,FIPS,RPL_THEMES,EP_POV
1,1001,01001,0.45,15.2
1,1003,01003,0.22,-999
6,6037,06037,0.81,16.5
";

const CUSP: &str = "state,stay_home_start,stay_home_end
Alabama,2020-04-04,
California,2020-03-19,2020-06-01
";

const TRACKING: &str = "date,state,totalTestResults,positive
2020-04-01,AL,1000,90
2020-04-02,AL,1400,120
2020-04-03,AL,2000,160
2020-04-01,CA,20000,3000
2020-04-03,CA,26000,3900
";

fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    let path = |name: &str, contents: &str| -> anyhow::Result<_> {
        let p = dir.path().join(name);
        fs::write(&p, contents)?;
        Ok(Some(p))
    };
    let mut config = RunConfig::default();
    config.data.cases = path("cases.csv", CASES)?;
    config.data.gazetteer = path("gazetteer.txt", GAZETTEER)?;
    config.data.svi = path("svi.csv", SVI)?;
    config.data.cusp = path("cusp.csv", CUSP)?;
    config.data.tracking = path("tracking.csv", TRACKING)?;
    config.lag = 2;

    let inputs = load_inputs(&config)?;
    println!(
        "{} counties over {} days, {} case row(s) without FIPS dropped",
        inputs.panel.num_counties(),
        inputs.panel.num_days(),
        inputs.dropped_rows
    );
    let frame = &inputs.frame;
    println!("dropped all-missing columns: {:?}", frame.dropped_columns());
    let names = frame.registry().names();
    for (county, day, row) in frame.iter().filter(|(_, d, _)| *d == DayIndex(2)) {
        println!("\n{} ({}) on {}:", county.fips(), county.state(), inputs.panel.date(day));
        for (j, name) in names.iter().enumerate() {
            let note = if row.missing[j] { "  (imputed)" } else { "" };
            println!("  {name:<34} {:>10.3}{note}", row.values[j]);
        }
    }
    Ok(())
}
