//! `rlab report`: line plots as hand-written SVG plus a text summary.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use robustlab::attacks::MetricsRecord;
use robustlab::harness::read_metrics_csv;

use crate::CliError;

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: f64 = 56.0;
const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

pub enum Table {
    Metrics(Vec<MetricsRecord>),
    /// Rows of a mix sweep, each with its α.
    Sweep(Vec<(f64, MetricsRecord)>),
}

pub fn parse_table(text: &str) -> Result<Table, CliError> {
    let header = text.lines().next().unwrap_or("").trim();
    if header == MetricsRecord::CSV_HEADER {
        return Ok(Table::Metrics(read_metrics_csv(text)?));
    }
    if header.strip_prefix("alpha,") != Some(MetricsRecord::CSV_HEADER) {
        return Err(CliError::Config(format!("unrecognised CSV header {header:?}")));
    }
    let mut alphas = Vec::new();
    let mut inner = format!("{}\n", MetricsRecord::CSV_HEADER);
    for (i, line) in text.lines().skip(1).filter(|l| !l.trim().is_empty()).enumerate() {
        let (a, rest) = line
            .split_once(',')
            .ok_or_else(|| CliError::Config(format!("sweep row {}: missing alpha", i + 1)))?;
        let a: f64 = a
            .parse()
            .map_err(|_| CliError::Config(format!("sweep row {}: bad alpha {a:?}", i + 1)))?;
        alphas.push(a);
        inner.push_str(rest);
        inner.push('\n');
    }
    let records = read_metrics_csv(&inner)?;
    Ok(Table::Sweep(alphas.into_iter().zip(records).collect()))
}

struct Series {
    label: String,
    points: Vec<(f64, f64)>,
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Y axis is fixed to [0, 1].
fn svg_plot(title: &str, x_label: &str, series: &[Series]) -> String {
    let xs = series.iter().flat_map(|s| s.points.iter().map(|p| p.0));
    let (lo, hi) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    let (lo, hi) = match (lo.is_finite(), hi > lo) {
        (false, _) => (0.0, 1.0),
        (true, false) => (lo, lo + 1.0),
        (true, true) => (lo, hi),
    };
    let pw = W - 2.0 * MARGIN;
    let ph = H - 2.0 * MARGIN;
    let px = |x: f64| MARGIN + (x - lo) / (hi - lo) * pw;
    let py = |y: f64| H - MARGIN - y.clamp(0.0, 1.0) * ph;

    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#).unwrap();
    writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#).unwrap();
    writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, esc(title)).unwrap();
    for k in 0..=4 {
        let v = k as f64 / 4.0;
        let y = py(v);
        writeln!(s, r##"<line x1="{MARGIN}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/>"##, W - MARGIN).unwrap();
        writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{v:.2}</text>"#, MARGIN - 6.0, y + 4.0).unwrap();
    }
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, px(v), H - MARGIN + 18.0, fmt_tick(v)).unwrap();
    }
    writeln!(s, r#"<rect x="{MARGIN}" y="{MARGIN}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#).unwrap();
    writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, W / 2.0, H - 12.0, esc(x_label)).unwrap();
    for (i, ser) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = ser.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, pts.join(" ")).unwrap();
        let ly = MARGIN + 14.0 + 16.0 * i as f64;
        writeln!(s, r#"<line x1="{:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#, W - MARGIN - 150.0, W - MARGIN - 130.0).unwrap();
        writeln!(s, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, W - MARGIN - 125.0, ly + 4.0, esc(&ser.label)).unwrap();
    }
    s.push_str("</svg>\n");
    s
}

fn fmt_tick(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e9 {
        format!("{}", v as i64)
    } else {
        format!("{v:.2}")
    }
}

fn slug(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect()
}

/// Attack names in first-seen order.
fn attack_names<'a>(records: impl Iterator<Item = &'a MetricsRecord>) -> Vec<String> {
    let mut names: Vec<String> = Vec::new();
    for r in records {
        if !names.contains(&r.attack) {
            names.push(r.attack.clone());
        }
    }
    names
}

fn fmt_asr(a: Option<f64>) -> String {
    a.map_or("-".into(), |v| format!("{v:.4}"))
}

/// Returns the files written and appends to the summary.
fn report_one(out: &Path, stem: &str, table: &Table, summary: &mut String) -> Result<Vec<PathBuf>, CliError> {
    let mut written = Vec::new();
    match table {
        Table::Metrics(records) => {
            writeln!(summary, "== {stem}: {} rows", records.len()).unwrap();
            writeln!(summary, "{:<16} {:>8} {:>8} {:>8} {:>8} {:>6}", "attack", "step", "nat", "rob", "asr", "n").unwrap();
            for name in attack_names(records.iter()) {
                let rows: Vec<&MetricsRecord> = records.iter().filter(|r| r.attack == name).collect();
                let last = rows[rows.len() - 1];
                writeln!(
                    summary,
                    "{:<16} {:>8} {:>8.4} {:>8.4} {:>8} {:>6}",
                    name,
                    last.step,
                    last.nat_acc,
                    last.rob_acc,
                    fmt_asr(last.asr),
                    last.n
                )
                .unwrap();
                let pick = |f: fn(&MetricsRecord) -> Option<f64>| rows.iter().filter_map(|r| f(r).map(|v| (r.step as f64, v))).collect();
                let series = [
                    Series { label: "natural acc".into(), points: pick(|r| Some(r.nat_acc)) },
                    Series { label: "robust acc".into(), points: pick(|r| Some(r.rob_acc)) },
                    Series { label: "ASR".into(), points: pick(|r| r.asr) },
                ];
                let path = out.join(format!("{stem}-{}.svg", slug(&name)));
                fs::write(&path, svg_plot(&format!("{stem}: {name}"), "step", &series))?;
                written.push(path);
            }
        }
        Table::Sweep(rows) => {
            writeln!(summary, "== {stem}: {} rows", rows.len()).unwrap();
            writeln!(summary, "{:>6} {:<16} {:>8} {:>8} {:>8}", "alpha", "attack", "nat", "rob", "asr").unwrap();
            for (a, r) in rows {
                writeln!(summary, "{:>6} {:<16} {:>8.4} {:>8.4} {:>8}", a, r.attack, r.nat_acc, r.rob_acc, fmt_asr(r.asr)).unwrap();
            }
            if !rows.is_empty() {
                let series: Vec<Series> = attack_names(rows.iter().map(|(_, r)| r))
                    .into_iter()
                    .map(|name| Series {
                        points: rows.iter().filter(|(_, r)| r.attack == name).map(|(a, r)| (*a, r.rob_acc)).collect(),
                        label: format!("{name} robust acc"),
                    })
                    .collect();
                let path = out.join(format!("{stem}-sweep.svg"));
                fs::write(&path, svg_plot(&format!("{stem}: robust accuracy vs alpha"), "alpha", &series))?;
                written.push(path);
            }
        }
    }
    Ok(written)
}

pub fn run(out: &Path, paths: &[PathBuf]) -> Result<(), CliError> {
    let mut summary = String::new();
    for p in paths {
        let text = fs::read_to_string(p).map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
        let table = parse_table(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
        let stem = p.file_stem().map_or("report".into(), |s| s.to_string_lossy().into_owned());
        for w in report_one(out, &stem, &table, &mut summary)? {
            log::info!("wrote {}", w.display());
        }
    }
    fs::write(out.join("summary.txt"), &summary)?;
    print!("{summary}");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "step,epoch,attack,nat_acc,rob_acc,asr,n,seed";

    #[test]
    fn sweep_and_metrics_headers_are_told_apart() {
        let m = format!("{HEADER}\n10,0.5000,linf-8,0.500000,0.250000,0.500000,100,0\n");
        assert!(matches!(parse_table(&m).unwrap(), Table::Metrics(r) if r.len() == 1));
        let s = format!("alpha,{HEADER}\n0.5,10,1.0000,none,0.900000,0.900000,0.000000,100,0\n");
        match parse_table(&s).unwrap() {
            Table::Sweep(rows) => assert_eq!(rows[0].0, 0.5),
            _ => panic!("expected a sweep"),
        }
        assert!(parse_table("a,b\n").is_err());
        assert!(parse_table(&format!("alpha,{HEADER}\nx,1\n")).is_err());
    }

    #[test]
    fn plot_is_deterministic_text() {
        let series = [Series {
            label: "a<b".into(),
            points: vec![(0.0, 0.1), (10.0, 0.9)],
        }];
        let a = svg_plot("t", "step", &series);
        assert_eq!(a, svg_plot("t", "step", &series));
        assert!(a.starts_with("<svg") && a.trim_end().ends_with("</svg>"));
        assert!(a.contains("a&lt;b"));
        // a single point still gets a finite axis
        let one = [Series {
            label: "x".into(),
            points: vec![(3.0, 0.5)],
        }];
        assert!(!svg_plot("t", "step", &one).contains("NaN"));
    }
}
