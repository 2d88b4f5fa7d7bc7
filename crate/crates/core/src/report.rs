//! Result files and accuracy-curve charts.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::harness::{mean_and_sd, AggregateRow, ExperimentResult, SeedRun};
use crate::io::{csv_writer, fmt_f64};

pub const RESULTS_HEADER: [&str; 7] = [
    "run_seed",
    "round",
    "total_labels",
    "test_accuracy",
    "scorer",
    "mode",
    "classifier",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub run_seed: u64,
    pub round: usize,
    pub total_labels: usize,
    pub test_accuracy: f64,
    pub scorer: String,
    pub mode: String,
    pub classifier: String,
}

pub fn result_rows(config: &ExperimentConfig, result: &ExperimentResult) -> Vec<ResultRow> {
    let classifier = config.classifier_label();
    result
        .runs
        .iter()
        .flat_map(|run| {
            let classifier = classifier.clone();
            run.rounds.iter().map(move |log| ResultRow {
                run_seed: run.seed,
                round: log.round,
                total_labels: log.total_labels,
                test_accuracy: log.test_accuracy,
                scorer: config.scorer.name().to_string(),
                mode: config.mode.name().to_string(),
                classifier: classifier.clone(),
            })
        })
        .collect()
}

pub fn write_results_csv(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv_writer(File::create(path)?);
    w.write_record(RESULTS_HEADER)?;
    for r in rows {
        w.write_record([
            r.run_seed.to_string(),
            r.round.to_string(),
            r.total_labels.to_string(),
            fmt_f64(r.test_accuracy),
            r.scorer.clone(),
            r.mode.clone(),
            r.classifier.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let file = File::open(path).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: 0,
        message: format!("cannot open: {e}"),
    })?;
    let mut reader = csv::Reader::from_reader(file);
    if reader.headers()?.iter().ne(RESULTS_HEADER) {
        return Err(Error::Parse {
            path: path.display().to_string(),
            line: 1,
            message: format!("expected header `{}`", RESULTS_HEADER.join(",")),
        });
    }
    reader
        .deserialize()
        .map(|row| {
            row.map_err(|e: csv::Error| Error::Parse {
                path: path.display().to_string(),
                line: e.position().map_or(0, |p| p.line() as usize),
                message: e.to_string(),
            })
        })
        .collect()
}

/// JSON sidecar: config echo, per-round logs and aggregates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sidecar {
    pub config: ExperimentConfig,
    pub runs: Vec<SeedRun>,
    pub aggregate: Vec<AggregateRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// SHA-256 of `config.toml` in the output directory.
    pub config_hash: String,
    pub config_source: String,
    pub versions: BTreeMap<String, String>,
    pub started_unix: u64,
    pub finished_unix: u64,
    /// Every file written, relative to the output directory.
    pub outputs: Vec<String>,
}

/// One labeled accuracy curve with per-point spread.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub label: String,
    pub seeds: usize,
    /// `(mean total labels, mean accuracy, sample standard deviation)` per round.
    pub points: Vec<(f64, f64, f64)>,
}

/// Groups rows by (scorer, mode, classifier) and averages over seeds per
/// round. Curves from different sources that share a label get the source
/// name appended.
pub fn curves(sources: &[(String, Vec<ResultRow>)]) -> Result<Vec<Curve>> {
    let mut out: Vec<(String, Curve)> = Vec::new();
    for (source, rows) in sources {
        let mut groups: BTreeMap<(String, String, String), BTreeMap<usize, Vec<&ResultRow>>> = BTreeMap::new();
        for r in rows {
            groups
                .entry((r.scorer.clone(), r.mode.clone(), r.classifier.clone()))
                .or_default()
                .entry(r.round)
                .or_default()
                .push(r);
        }
        for ((scorer, mode, classifier), rounds) in groups {
            let seeds = rounds.values().map(Vec::len).max().unwrap_or(0);
            let points = rounds
                .values()
                .map(|rows| {
                    let acc: Vec<f64> = rows.iter().map(|r| r.test_accuracy).collect();
                    let labels: Vec<f64> = rows.iter().map(|r| r.total_labels as f64).collect();
                    let (mean, sd) = mean_and_sd(&acc);
                    (mean_and_sd(&labels).0, mean, sd)
                })
                .collect();
            let label = format!("{scorer} ({mode}, {classifier})");
            out.push((source.clone(), Curve { label, seeds, points }));
        }
    }
    if out.is_empty() {
        return Err(Error::Config("no result rows to report".into()));
    }
    let labels: Vec<String> = out.iter().map(|(_, c)| c.label.clone()).collect();
    for (source, curve) in &mut out {
        if labels.iter().filter(|l| **l == curve.label).count() > 1 {
            curve.label = format!("{} [{source}]", curve.label);
        }
    }
    Ok(out.into_iter().map(|(_, c)| c).collect())
}

/// `label,seeds,final_total_labels,final_mean_accuracy,final_sd_accuracy`.
pub fn write_summary_csv(path: &Path, curves: &[Curve]) -> Result<()> {
    let mut w = csv_writer(File::create(path)?);
    w.write_record([
        "curve",
        "seeds",
        "final_total_labels",
        "final_mean_accuracy",
        "final_sd_accuracy",
    ])?;
    for c in curves {
        let (labels, mean, sd) = c.points.last().copied().unwrap_or_default();
        w.write_record([
            c.label.clone(),
            c.seeds.to_string(),
            fmt_f64(labels),
            fmt_f64(mean),
            fmt_f64(sd),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Plain-text table of final-round means.
pub fn summary_table(curves: &[Curve]) -> String {
    let width = curves.iter().map(|c| c.label.len()).max().unwrap_or(5).max(5);
    let mut out = format!("{:<width$}  {:>5}  {:>8}  {:>8}  {:>8}\n", "curve", "seeds", "labels", "mean", "sd");
    for c in curves {
        let (labels, mean, sd) = c.points.last().copied().unwrap_or_default();
        out.push_str(&format!(
            "{:<width$}  {:>5}  {:>8.1}  {:>8.4}  {:>8.4}\n",
            c.label, c.seeds, labels, mean, sd
        ));
    }
    out
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// Tick positions on a 1-2-5 step covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let span = (hi - lo).max(1e-12);
    let raw = span / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|i| i as f64 * step).collect()
}

fn fmt_tick(t: f64) -> String {
    let s = format!("{t:.4}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Static SVG: mean accuracy against total labels, one line per curve with a
/// shaded ±1 standard deviation band.
pub fn render_svg(curves: &[Curve]) -> String {
    let (w, h) = (760.0, 460.0);
    let (left, right, top, bottom) = (70.0, 250.0, 30.0, 60.0);
    let pw = w - left - right;
    let ph = h - top - bottom;

    let all = curves.iter().flat_map(|c| c.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, m, s) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(m - s);
        y1 = y1.max(m + s);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-9 {
        x0 -= 1.0;
        x1 += 1.0;
    }
    let pad = ((y1 - y0) * 0.05).max(0.005);
    y0 = (y0 - pad).max(0.0);
    y1 = (y1 + pad).min(1.0);
    if y1 - y0 < 1e-9 {
        y0 = (y0 - 0.01).max(0.0);
        y1 = y0 + 0.02;
    }
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| top + (1.0 - (y - y0) / (y1 - y0)) * ph;

    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    );
    svg.push_str(&format!("<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"));
    for t in ticks(x0, x1, 6) {
        let x = sx(t);
        svg.push_str(&format!(
            "<line x1=\"{x:.2}\" y1=\"{top:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"#e5e5e5\"/>\n<text x=\"{x:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>\n",
            top + ph,
            top + ph + 18.0,
            fmt_tick(t)
        ));
    }
    for t in ticks(y0, y1, 6) {
        let y = sy(t);
        svg.push_str(&format!(
            "<line x1=\"{left:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"#e5e5e5\"/>\n<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>\n",
            left + pw,
            left - 6.0,
            y + 4.0,
            fmt_tick(t)
        ));
    }
    svg.push_str(&format!(
        "<rect x=\"{left:.2}\" y=\"{top:.2}\" width=\"{pw:.2}\" height=\"{ph:.2}\" fill=\"none\" stroke=\"black\"/>\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">Total labels</text>\n",
        left + pw / 2.0,
        h - 15.0
    ));
    svg.push_str(&format!(
        "<text transform=\"translate(18 {:.2}) rotate(-90)\" text-anchor=\"middle\">Test accuracy</text>\n",
        top + ph / 2.0
    ));

    for (c, curve) in curves.iter().enumerate() {
        let color = PALETTE[c % PALETTE.len()];
        let upper: Vec<String> = curve.points.iter().map(|&(x, m, s)| format!("{:.2},{:.2}", sx(x), sy(m + s))).collect();
        let lower: Vec<String> = curve
            .points
            .iter()
            .rev()
            .map(|&(x, m, s)| format!("{:.2},{:.2}", sx(x), sy(m - s)))
            .collect();
        svg.push_str(&format!(
            "<polygon class=\"band\" points=\"{} {}\" fill=\"{color}\" fill-opacity=\"0.2\" stroke=\"none\"/>\n",
            upper.join(" "),
            lower.join(" ")
        ));
        let line: Vec<String> = curve.points.iter().map(|&(x, m, _)| format!("{:.2},{:.2}", sx(x), sy(m))).collect();
        svg.push_str(&format!(
            "<polyline class=\"curve\" points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            line.join(" ")
        ));
        let ly = top + 10.0 + 20.0 * c as f64;
        let lx = left + pw + 15.0;
        svg.push_str(&format!(
            "<line x1=\"{lx:.2}\" y1=\"{ly:.2}\" x2=\"{:.2}\" y2=\"{ly:.2}\" stroke=\"{color}\" stroke-width=\"3\"/>\n<text class=\"legend\" x=\"{:.2}\" y=\"{:.2}\">{}</text>\n",
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(&curve.label)
        ));
    }
    svg.push_str("</svg>\n");
    svg
}
