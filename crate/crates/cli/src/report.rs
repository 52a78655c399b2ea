use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use fedhet::algorithms::Algorithm;
use fedhet::orchestrator::{read_metrics_csv, BaselineKind};

use crate::error::{io_error, CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Metric {
    Accuracy,
    BalancedAccuracy,
}

/// One metrics file: a single algorithm or baseline on a single setup.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub setup: String,
    pub points: Vec<(usize, f64)>,
}

pub fn load_series(path: &Path, metric: Metric) -> CliResult<Series> {
    if !path.is_file() {
        return Err(CliError::Usage(format!("metrics file {} does not exist", path.display())));
    }
    let rows = read_metrics_csv(path).map_err(|e| CliError::Usage(e.to_string()))?;
    let first = rows
        .first()
        .ok_or_else(|| CliError::Usage(format!("{} has no rounds", path.display())))?;
    let (label, setup) = (first.algorithm.clone(), first.setup.clone());
    if rows.iter().any(|r| r.algorithm != label || r.setup != setup) {
        return Err(CliError::Usage(format!(
            "{} mixes several runs; expected one algorithm and setup",
            path.display()
        )));
    }
    let points = rows
        .iter()
        .map(|r| {
            let v = match metric {
                Metric::Accuracy => r.accuracy,
                Metric::BalancedAccuracy => r.balanced_accuracy,
            };
            (r.round, v)
        })
        .collect();
    Ok(Series { label, setup, points })
}

fn is_baseline(label: &str) -> bool {
    [BaselineKind::NoFederation, BaselineKind::Centralized]
        .iter()
        .any(|b| b.label() == label)
}

/// Algorithms in their usual order, then the baselines, then anything else.
fn column_order(labels: impl Iterator<Item = String>) -> Vec<String> {
    let known: Vec<&str> = Algorithm::ALL
        .iter()
        .map(|a| a.name())
        .chain([BaselineKind::NoFederation.label(), BaselineKind::Centralized.label()])
        .collect();
    let mut labels: Vec<String> = labels.collect();
    labels.sort_by_key(|l| (known.iter().position(|k| k == l).unwrap_or(known.len()), l.clone()));
    labels.dedup();
    labels
}

/// Per-round mean over all files with the same setup and label.
fn mean_curves(series: &[Series]) -> BTreeMap<(String, String), Vec<(usize, f64)>> {
    let mut acc: BTreeMap<(String, String), BTreeMap<usize, (f64, usize)>> = BTreeMap::new();
    for s in series {
        let m = acc.entry((s.setup.clone(), s.label.clone())).or_default();
        for &(r, v) in &s.points {
            let e = m.entry(r).or_insert((0.0, 0));
            e.0 += v;
            e.1 += 1;
        }
    }
    acc.into_iter()
        .map(|(k, m)| (k, m.into_iter().map(|(r, (s, n))| (r, s / n as f64)).collect()))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub setup: String,
    pub round: String,
    pub cells: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<TableRow>,
}

/// Accuracy per setup and selected round (rows) and algorithm (columns).
/// Without `rounds`, each series contributes its last round.
pub fn build_table(series: &[Series], rounds: Option<&[usize]>) -> Table {
    let columns = column_order(series.iter().map(|s| s.label.clone()));
    let mut setups: Vec<String> = series.iter().map(|s| s.setup.clone()).collect();
    setups.sort();
    setups.dedup();
    let mut rows = Vec::new();
    match rounds {
        Some(rounds) => {
            let curves = mean_curves(series);
            for setup in &setups {
                for &r in rounds {
                    let cells = columns
                        .iter()
                        .map(|c| {
                            curves
                                .get(&(setup.clone(), c.clone()))
                                .and_then(|pts| pts.iter().find(|p| p.0 == r).map(|p| p.1))
                        })
                        .collect();
                    rows.push(TableRow {
                        setup: setup.clone(),
                        round: r.to_string(),
                        cells,
                    });
                }
            }
        }
        None => {
            for setup in &setups {
                let cells = columns
                    .iter()
                    .map(|c| {
                        let finals: Vec<f64> = series
                            .iter()
                            .filter(|s| &s.setup == setup && &s.label == c)
                            .filter_map(|s| s.points.last().map(|p| p.1))
                            .collect();
                        (!finals.is_empty()).then(|| finals.iter().sum::<f64>() / finals.len() as f64)
                    })
                    .collect();
                rows.push(TableRow {
                    setup: setup.clone(),
                    round: "final".into(),
                    cells,
                });
            }
        }
    }
    Table { columns, rows }
}

fn cell(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into())
}

pub fn render_csv(t: &Table) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let header = ["setup", "round"].into_iter().map(String::from).chain(t.columns.iter().cloned());
    let err = |e: csv::Error| CliError::Runtime(e.to_string());
    w.write_record(header).map_err(err)?;
    for r in &t.rows {
        let rec = [r.setup.clone(), r.round.clone()]
            .into_iter()
            .chain(r.cells.iter().map(|c| c.map(|v| v.to_string()).unwrap_or_default()));
        w.write_record(rec).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Runtime(e.error().to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Runtime(e.to_string()))
}

pub fn render_text(t: &Table) -> String {
    let mut grid: Vec<Vec<String>> = vec![["setup", "round"]
        .into_iter()
        .map(String::from)
        .chain(t.columns.iter().cloned())
        .collect()];
    for r in &t.rows {
        grid.push(
            [r.setup.clone(), r.round.clone()]
                .into_iter()
                .chain(r.cells.iter().map(|&c| cell(c)))
                .collect(),
        );
    }
    let widths: Vec<usize> = (0..grid[0].len())
        .map(|j| grid.iter().map(|row| row[j].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in grid.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(j, (s, &w))| if j < 2 { format!("{s:<w$}") } else { format!("{s:>w$}") })
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
            out.push('\n');
        }
    }
    out
}

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Accuracy against round for one setup. Baselines are drawn as dashed
/// horizontal lines at their final value.
pub fn render_chart(setup: &str, curves: &[(String, Vec<(usize, f64)>)]) -> String {
    let (w, h) = (760.0, 440.0);
    let (left, right, top, bottom) = (60.0, 170.0, 40.0, 50.0);
    let (pw, ph) = (w - left - right, h - top - bottom);
    let max_round = curves
        .iter()
        .flat_map(|(_, p)| p.iter().map(|p| p.0))
        .max()
        .unwrap_or(1)
        .max(2);
    let values: Vec<f64> = curves.iter().flat_map(|(_, p)| p.iter().map(|p| p.1)).collect();
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (mut y0, mut y1) = ((lo * 10.0).floor() / 10.0, (hi * 10.0).ceil() / 10.0);
    if !y0.is_finite() || !y1.is_finite() {
        (y0, y1) = (0.0, 1.0);
    }
    if y1 - y0 < 0.1 {
        y1 = y0 + 0.1;
    }
    let step = if y1 - y0 <= 0.3 { 0.05 } else { 0.1 };
    let sx = |r: f64| left + pw * (r - 1.0) / (max_round as f64 - 1.0);
    let sy = |v: f64| top + ph * (1.0 - (v - y0) / (y1 - y0));

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        left + pw / 2.0,
        xml_escape(setup)
    );
    let ticks = ((y1 - y0) / step).round() as usize;
    for i in 0..=ticks {
        let v = y0 + step * i as f64;
        let y = sy(v);
        let _ = writeln!(
            s,
            r##"<line x1="{left}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#e0e0e0"/><text x="{:.1}" y="{:.1}" text-anchor="end">{v:.2}</text>"##,
            left + pw,
            left - 6.0,
            y + 4.0
        );
    }
    let xstep = (max_round / 10).max(1);
    for r in (0..=max_round).step_by(xstep).filter(|r| *r >= 1) {
        let x = sx(r as f64);
        let _ = writeln!(
            s,
            r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{r}</text>"#,
            top + ph + 18.0
        );
    }
    let _ = writeln!(
        s,
        r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">round</text>"#,
        left + pw / 2.0,
        h - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">accuracy</text>"#,
        top + ph / 2.0,
        top + ph / 2.0
    );
    for (i, (label, pts)) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if is_baseline(label) {
            if let Some(&(_, v)) = pts.last() {
                let y = sy(v);
                let _ = writeln!(
                    s,
                    r#"<line x1="{left}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="{color}" stroke-width="2" stroke-dasharray="6 4"/>"#,
                    left + pw
                );
            }
        } else {
            let path: Vec<String> = pts
                .iter()
                .map(|&(r, v)| format!("{:.1},{:.1}", sx(r as f64), sy(v)))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                path.join(" ")
            );
        }
        let ly = top + 10.0 + 18.0 * i as f64;
        let lx = left + pw + 14.0;
        let dash = if is_baseline(label) { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"{dash}/><text x="{}" y="{}">{}</text>"#,
            lx + 22.0,
            lx + 28.0,
            ly + 4.0,
            xml_escape(label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn slug(s: &str) -> String {
    let mut out = String::new();
    for c in s.chars() {
        let c = if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' };
        if !(c == '_' && out.ends_with('_')) {
            out.push(c);
        }
    }
    out.trim_matches('_').to_string()
}

/// Write `table.csv`, `table.txt` and one `chart-<setup>.svg` per setup into
/// `out`. Returns the written paths.
pub fn write_report(series: &[Series], rounds: Option<&[usize]>, out: &Path) -> CliResult<Vec<PathBuf>> {
    fs::create_dir_all(out).map_err(|e| io_error(out, e))?;
    let table = build_table(series, rounds);
    let mut written = Vec::new();
    let mut put = |name: String, body: String| -> CliResult<()> {
        let p = out.join(name);
        fs::write(&p, body).map_err(|e| io_error(&p, e))?;
        written.push(p);
        Ok(())
    };
    put("table.csv".into(), render_csv(&table)?)?;
    put("table.txt".into(), render_text(&table))?;
    let curves = mean_curves(series);
    let mut setups: Vec<&String> = curves.keys().map(|k| &k.0).collect();
    setups.dedup();
    for setup in setups {
        let ordered: Vec<(String, Vec<(usize, f64)>)> = table
            .columns
            .iter()
            .filter_map(|c| curves.get(&(setup.clone(), c.clone())).map(|p| (c.clone(), p.clone())))
            .collect();
        put(format!("chart-{}.svg", slug(setup)), render_chart(setup, &ordered))?;
    }
    Ok(written)
}
