use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;

const BIN: &str = env!("CARGO_BIN_EXE_adaptive-growth");

const SCENARIO: &str = r#"
num_counties = 12
num_days = 60
base_rate = 0.05
sigma = 0.05
initial_level = [200.0, 2000.0]
num_distractors = 1
lag = 22
start_date = "2020-03-01"
seed = 5

[[regimes]]
switch_day = 40
new_rate = 0.12
"#;

fn run(args: &[&str], cwd: &Path) -> String {
    let out = Command::new(BIN).args(args).current_dir(cwd).output().unwrap();
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn read_dir(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

fn synth(dir: &Path) {
    fs::write(dir.join("scenario.toml"), SCENARIO).unwrap();
    run(&["synth", "--scenario", "scenario.toml", "--out", "data"], dir);
}

#[test]
fn synth_writes_dataset() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let files = read_dir(&dir.path().join("data"));
    let names: Vec<&str> = files.keys().map(String::as_str).collect();
    assert_eq!(names, ["cases.csv", "features.csv", "scenario.toml", "true_rates.csv"]);
    let cases = String::from_utf8(files["cases.csv"].clone()).unwrap();
    assert!(cases.starts_with("date,county,state,fips,cases,deaths\n"));
    assert_eq!(cases.lines().count(), 1 + 12 * 60);
}

#[test]
fn backtest_outputs_and_rerun_identical() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let args = [
        "backtest",
        "--cases",
        "data/cases.csv",
        "--features",
        "data/features.csv",
        "--trees",
        "20",
        "--stride",
        "4",
        "--out",
        "bt",
    ];
    let stdout = run(&args, dir.path());
    assert!(stdout.contains("OLS.wsize=16"));
    let first = read_dir(&dir.path().join("bt"));
    for name in ["metrics.csv", "metrics_ma4.csv", "summary.csv", "mape_ma4.svg", "skipped.csv", "config.toml"] {
        assert!(first.contains_key(name), "missing {name}");
    }
    let metrics = String::from_utf8(first["metrics.csv"].clone()).unwrap();
    assert!(metrics.starts_with("day,date,method,rmse,mape,n_counties\n"));
    let methods: std::collections::BTreeSet<&str> =
        metrics.lines().skip(1).map(|l| l.split(',').nth(2).unwrap()).collect();
    assert_eq!(methods.len(), 5);

    run(&args, dir.path());
    assert_eq!(first, read_dir(&dir.path().join("bt")));

    // the echoed config reproduces the run
    fs::copy(dir.path().join("bt/config.toml"), dir.path().join("echo.toml")).unwrap();
    run(&["backtest", "--config", "echo.toml", "--out", "bt2"], dir.path());
    let second = read_dir(&dir.path().join("bt2"));
    for (name, bytes) in &first {
        if name != "config.toml" {
            assert_eq!(bytes, &second[name], "{name} differs");
        }
    }
}

#[test]
fn estimate_sorts_and_marks_missing_counties() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    // County 01001 stops reporting early, so it has no block on the last day.
    let cases = fs::read_to_string(dir.path().join("data/cases.csv")).unwrap();
    let kept: Vec<&str> = cases
        .lines()
        .filter(|l| !(l.contains(",01001,") && &l[..10] > "2020-04-15"))
        .collect();
    fs::write(dir.path().join("data/cases.csv"), kept.join("\n") + "\n").unwrap();

    run(
        &[
            "estimate",
            "--cases",
            "data/cases.csv",
            "--features",
            "data/features.csv",
            "--trees",
            "30",
            "--out",
            "est",
        ],
        dir.path(),
    );
    let text = fs::read_to_string(dir.path().join("est/estimates.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("fips,state,r_hat,forecast_incident,n_effective"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 12);
    let last = rows.last().unwrap();
    assert_eq!(last[..], ["01001", "AL", "NA", "NA", "NA"]);
    let rates: Vec<f64> = rows[..11].iter().map(|r| r[2].parse().unwrap()).collect();
    assert!(rates.windows(2).all(|w| w[0] >= w[1]), "{rates:?}");
    for r in &rows[..11] {
        assert!(r[3].parse::<f64>().unwrap() > 0.0);
        assert!(r[4].parse::<f64>().unwrap() >= 1.0);
    }
    assert!(dir.path().join("est/model.json").exists());
    assert!(dir.path().join("est/config.toml").exists());
}

#[test]
fn invalid_arguments_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    for args in [
        vec!["backtest", "--cases", "data/cases.csv", "--trees", "0"],
        vec!["backtest", "--cases", "data/cases.csv", "--windows", "2,2"],
        vec!["backtest", "--cases", "missing.csv"],
        vec!["estimate", "--cases", "data/cases.csv", "--as-of", "2019-01-01"],
        vec!["backtest"],
    ] {
        let out = Command::new(BIN).args(&args).current_dir(dir.path()).output().unwrap();
        assert!(!out.status.success(), "{args:?} should fail");
        assert!(!out.stderr.is_empty());
    }
}
