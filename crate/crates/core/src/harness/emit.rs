//! CSV, JSON and SVG output. Every writer is deterministic: identical inputs
//! give byte-identical files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{OutputFormat, OutputSpec, PlotMetric};
use super::experiment::{CellSummary, ExperimentOutput, ResultRecord, RunManifest};
use super::HarnessError;

pub const CSV_HEADER: &str = "experiment,seed,replicate,trial,m,n,alpha,variant,Q,correct,exhausted,elapsed_ms";

pub fn records_to_csv(records: &[ResultRecord]) -> Result<String, HarnessError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    for r in records {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    manifest: &'a RunManifest,
    summaries: &'a [CellSummary],
}

pub fn summary_json(manifest: &RunManifest, summaries: &[CellSummary]) -> Result<String, HarnessError> {
    let mut s = serde_json::to_string_pretty(&SummaryFile { manifest, summaries })?;
    s.push('\n');
    Ok(s)
}

fn metric_value(s: &CellSummary, metric: PlotMetric) -> f64 {
    match metric {
        PlotMetric::MeanQ => s.mean_q,
        PlotMetric::AdjustedQ => s.adjusted_mean_q,
        PlotMetric::SuccessRate => s.success_rate,
    }
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];

/// Line plot of one metric against `m`, one series per experiment label
/// and `alpha`, optionally with the `2m/mu` reference line.
pub fn summary_svg(summaries: &[CellSummary], metric: PlotMetric, reference_line: bool) -> Result<String, HarnessError> {
    if summaries.is_empty() {
        return Err(HarnessError::EmptyOutput("summary has no cells"));
    }
    let mut series: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for s in summaries {
        let key = if summaries.iter().any(|o| o.alpha != s.alpha) {
            format!("{} alpha={}", s.experiment, s.alpha)
        } else {
            s.experiment.clone()
        };
        let y = metric_value(s, metric);
        if y.is_finite() {
            series.entry(key).or_default().push((s.m as f64, y));
        }
    }
    let reference: Vec<(f64, f64)> = if reference_line {
        let mut pts: Vec<(f64, f64)> = summaries.iter().map(|s| (s.m as f64, s.two_m_over_mu)).collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        pts.dedup();
        pts
    } else {
        Vec::new()
    };

    let all = series.values().flatten().chain(reference.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, 0.0f64, f64::MIN);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x0 > x1 {
        return Err(HarnessError::EmptyOutput("no finite values to plot"));
    }
    if x1 == x0 {
        x0 -= 1.0;
        x1 += 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    y1 *= 1.05;

    let (w, h, left, right, top, bottom) = (640.0, 400.0, 70.0, 200.0, 30.0, 50.0);
    let px = |x: f64| left + (x - x0) / (x1 - x0) * (w - left - right);
    let py = |y: f64| h - bottom - (y - y0) / (y1 - y0) * (h - top - bottom);
    let ylabel = match metric {
        PlotMetric::MeanQ => "mean Q",
        PlotMetric::AdjustedQ => "mean Q - ln(1/eps)/ln m",
        PlotMetric::SuccessRate => "success rate",
    };

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="11">"#);
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<line x1="{l}" y1="{b:.2}" x2="{r:.2}" y2="{b:.2}" stroke="black"/><line x1="{l}" y1="{t}" x2="{l}" y2="{b:.2}" stroke="black"/>"#,
        l = left,
        b = h - bottom,
        r = w - right,
        t = top
    );
    for i in 0..=4 {
        let yv = y0 + (y1 - y0) * i as f64 / 4.0;
        let xv = x0 + (x1 - x0) * i as f64 / 4.0;
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{:.3}</text>"#, left - 5.0, py(yv) + 4.0, yv);
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{:.0}</text>"#, px(xv), h - bottom + 15.0, xv);
    }
    let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">m</text>"#, (left + w - right) / 2.0, h - 10.0);
    let _ = writeln!(
        svg,
        r#"<text x="15" y="{:.2}" text-anchor="middle" transform="rotate(-90 15 {:.2})">{ylabel}</text>"#,
        h / 2.0,
        h / 2.0
    );

    let mut legend = 0;
    let mut draw = |svg: &mut String, name: &str, pts: &[(f64, f64)], colour: &str, dash: bool| {
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let dash_attr = if dash { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = writeln!(svg, r#"<polyline fill="none" stroke="{colour}" stroke-width="2"{dash_attr} points="{}"/>"#, path.join(" "));
        if !dash {
            for &(x, y) in pts {
                let _ = writeln!(svg, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{colour}"/>"#, px(x), py(y));
            }
        }
        let ly = top + 15.0 * legend as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{colour}" stroke-width="2"{dash_attr}/><text x="{:.2}" y="{:.2}">{}</text>"#,
            w - right + 10.0,
            w - right + 30.0,
            w - right + 35.0,
            ly + 4.0,
            escape(name)
        );
        legend += 1;
    };
    for (i, (name, pts)) in series.iter_mut().enumerate() {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        draw(&mut svg, name, pts, PALETTE[i % PALETTE.len()], false);
    }
    if !reference.is_empty() {
        draw(&mut svg, "2m/mu", &reference, "#555555", true);
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn write(path: PathBuf, contents: &str) -> Result<PathBuf, HarnessError> {
    std::fs::write(&path, contents).map_err(|e| HarnessError::io(&path, e))?;
    Ok(path)
}

/// Writes `results.csv`, `summary.json` and `summary.svg` (as selected) into `dir`.
pub fn emit_results(output: &ExperimentOutput, spec: &OutputSpec, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    if output.records.is_empty() {
        return Err(HarnessError::EmptyOutput("no result records"));
    }
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let mut written = Vec::new();
    for format in &spec.formats {
        let path = match format {
            OutputFormat::Csv => write(dir.join("results.csv"), &records_to_csv(&output.records)?)?,
            OutputFormat::Json => write(dir.join("summary.json"), &summary_json(&output.manifest, &output.summaries)?)?,
            OutputFormat::Svg => write(
                dir.join("summary.svg"),
                &summary_svg(&output.summaries, spec.plot_metric, spec.reference_line)?,
            )?,
        };
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(trial: usize) -> ResultRecord {
        ResultRecord {
            experiment: "fig2".into(),
            seed: 9,
            replicate: 0,
            trial,
            m: 1000,
            n: 10000,
            alpha: 0.25,
            variant: "T1".into(),
            q: Some(37),
            correct: true,
            exhausted: false,
            elapsed_ms: 0,
            victim: 3,
            error: None,
        }
    }

    fn summary(m: usize, alpha: f64, q: f64) -> CellSummary {
        CellSummary {
            experiment: "fig2".into(),
            level: String::new(),
            m,
            n: 10 * m,
            mu: 100.0,
            alpha,
            epsilon: 0.01,
            variant: "T1".into(),
            trials: 1,
            failed_trials: 0,
            mean_q: q,
            std_error_q: 0.0,
            adjusted_mean_q: q - 0.5,
            success_rate: 1.0,
            error_rate: 0.0,
            misidentification_rate: 0.0,
            exhausted_rate: 0.0,
            two_m_over_mu: 2.0 * m as f64 / 100.0,
            bound: None,
            within_bound: None,
        }
    }

    #[test]
    fn one_record_csv() {
        let csv = records_to_csv(&[record(0)]).unwrap();
        assert_eq!(csv, format!("{CSV_HEADER}\nfig2,9,0,0,1000,10000,0.25,T1,37,true,false,0\n"));
        let mut failed = record(1);
        failed.q = None;
        failed.correct = false;
        let csv = records_to_csv(&[failed]).unwrap();
        assert!(csv.ends_with("fig2,9,0,1,1000,10000,0.25,T1,,false,false,0\n"));
    }

    #[test]
    fn svg_series_and_reference() {
        let cells: Vec<_> = [1000, 2000, 5000, 10000]
            .iter()
            .flat_map(|&m| [0.25, 0.5, 1.0].map(|a| summary(m, a, m as f64 / 50.0 + a)))
            .collect();
        let svg = summary_svg(&cells, PlotMetric::AdjustedQ, true).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 4);
        assert!(svg.contains("2m/mu"));
        assert!(svg.contains("alpha=0.25"));
        assert_eq!(svg, summary_svg(&cells, PlotMetric::AdjustedQ, true).unwrap());
        assert!(matches!(summary_svg(&[], PlotMetric::MeanQ, false), Err(HarnessError::EmptyOutput(_))));
    }
}
