use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{median_summary, Method, MethodSummary, MetricRecord, MetricSeries};
use crate::error::{Error, Result};
use crate::panel::DayIndex;

/// Files written by [`emit_outputs`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Emitted {
    pub metrics: Vec<PathBuf>,
    pub summary: PathBuf,
    pub plots: Vec<PathBuf>,
}

const METRICS_HEADER: [&str; 6] = ["day", "date", "method", "rmse", "mape", "n_counties"];

/// Writes `metrics.csv` (per-day scores), `metrics_ma{k}.csv` for each
/// moving-average window, `summary.csv` with per-method medians (`ma` = 1 for
/// the unsmoothed series) and `{rmse,mape}_ma{k}.svg` line plots. An empty
/// series produces headers only and no plots.
pub fn emit_outputs(dir: &Path, series: &MetricSeries, ma_windows: &[usize]) -> Result<Emitted> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Emitted {
        summary: dir.join("summary.csv"),
        ..Default::default()
    };
    let mut summaries: Vec<(usize, Vec<MethodSummary>)> = Vec::new();

    let path = dir.join("metrics.csv");
    write_metrics(&path, series)?;
    out.metrics.push(path);
    summaries.push((1, median_summary(&series.records)));

    for &k in ma_windows {
        let smoothed = series.smoothed(k);
        let path = dir.join(format!("metrics_ma{k}.csv"));
        write_metrics(&path, &smoothed)?;
        out.metrics.push(path);
        summaries.push((k, median_summary(&smoothed.records)));
        if smoothed.records.is_empty() {
            continue;
        }
        for (metric, pick) in [("rmse", 0), ("mape", 1)] {
            let lines: Vec<(Method, Vec<(f64, f64)>)> = smoothed
                .methods()
                .into_iter()
                .map(|m| {
                    let pts = smoothed
                        .for_method(m)
                        .map(|r| {
                            let x = r.day.get() as f64 - series.first_case_day.get() as f64;
                            (x, if pick == 0 { r.rmse } else { r.mape })
                        })
                        .collect();
                    (m, pts)
                })
                .collect();
            let title = format!("{} ({k}-day moving average)", metric.to_uppercase());
            let path = dir.join(format!("{metric}_ma{k}.svg"));
            fs::write(&path, render_svg(&title, &metric.to_uppercase(), &lines))
                .map_err(|e| Error::io(&path, e))?;
            out.plots.push(path);
        }
    }

    write_summary(&out.summary, &summaries)?;
    Ok(out)
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn write_metrics(path: &Path, series: &MetricSeries) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(METRICS_HEADER).map_err(|e| csv_err(path, e))?;
    for r in &series.records {
        w.write_record([
            r.day.get().to_string(),
            r.day.to_date(series.origin).to_string(),
            r.method.to_string(),
            r.rmse.to_string(),
            r.mape.to_string(),
            r.n_counties.to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_summary(path: &Path, summaries: &[(usize, Vec<MethodSummary>)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(["method", "ma", "median_rmse", "median_mape", "n_days"])
        .map_err(|e| csv_err(path, e))?;
    for (k, rows) in summaries {
        for s in rows {
            w.write_record([
                s.method.to_string(),
                k.to_string(),
                s.median_rmse.to_string(),
                s.median_mape.to_string(),
                s.n_days.to_string(),
            ])
            .map_err(|e| csv_err(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn parse<T: std::str::FromStr>(path: &Path, line: usize, field: &str, s: &str) -> Result<T> {
    s.parse().map_err(|_| Error::Format {
        path: path.to_path_buf(),
        message: format!("line {line}: bad {field} {s:?}"),
    })
}

/// Reads a metrics file written by [`emit_outputs`].
pub fn read_metric_records(path: &Path) -> Result<Vec<MetricRecord>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = i + 2;
        let f = |j: usize| rec.get(j).unwrap_or("");
        out.push(MetricRecord {
            day: DayIndex(parse(path, line, "day", f(0))?),
            method: parse(path, line, "method", f(2))?,
            rmse: parse(path, line, "rmse", f(3))?,
            mape: parse(path, line, "mape", f(4))?,
            n_counties: parse(path, line, "n_counties", f(5))?,
        });
    }
    Ok(out)
}

/// Reads `summary.csv` as (moving-average window, summary) rows.
pub fn read_summary(path: &Path) -> Result<Vec<(usize, MethodSummary)>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = i + 2;
        let f = |j: usize| rec.get(j).unwrap_or("");
        out.push((
            parse(path, line, "ma", f(1))?,
            MethodSummary {
                method: parse(path, line, "method", f(0))?,
                median_rmse: parse(path, line, "median_rmse", f(2))?,
                median_mape: parse(path, line, "median_mape", f(3))?,
                n_days: parse(path, line, "n_days", f(4))?,
            },
        ));
    }
    Ok(out)
}

const PALETTE: [&str; 8] = [
    "#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// Standalone SVG line chart: one polyline per method and a legend.
pub fn render_svg(title: &str, y_label: &str, lines: &[(Method, Vec<(f64, f64)>)]) -> String {
    let (w, h) = (800.0, 480.0);
    let (left, right, top, bottom) = (70.0, 170.0, 40.0, 50.0);
    let pts = lines.iter().flat_map(|(_, p)| p.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    y0 = y0.min(0.0);
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let pw = w - left - right;
    let ph = h - top - bottom;
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| top + ph - (y - y0) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#, left + pw / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<path d="M{left} {top} V{} H{}" fill="none" stroke="black"/>"#,
        top + ph,
        left + pw
    );
    for i in 0..=4 {
        let fy = y0 + (y1 - y0) * i as f64 / 4.0;
        let fx = x0 + (x1 - x0) * i as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{:.4}</text>"#, left - 6.0, sy(fy) + 4.0, fy);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{}" text-anchor="middle">{:.0}</text>"#, sx(fx), top + ph + 18.0, fx);
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">days since first recorded case</text>"#,
        left + pw / 2.0,
        h - 8.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        top + ph / 2.0,
        top + ph / 2.0,
        escape(y_label)
    );
    for (i, (method, p)) in lines.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let points: Vec<String> = p.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"><title>{method}</title></polyline>"#,
            points.join(" ")
        );
        let ly = top + 10.0 + 20.0 * i as f64;
        let lx = w - right + 15.0;
        let _ = writeln!(s, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 25.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{method}</text>"#, lx + 32.0, ly + 4.0);
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
