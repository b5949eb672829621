//! Line-delimited JSON reports, human summaries and SVG curves.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::asc::TrainLog;
use crate::corpus::AspectPolarity;
use crate::harness::config::Mode;
use crate::metrics::MetricsReport;

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        if values.is_empty() {
            return Stat { mean: 0.0, std: 0.0 };
        }
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Stat { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    /// Test-set scores of the best-dev parameters.
    pub report: MetricsReport,
    pub log: TrainLog,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mode: Mode,
    /// Caveats about how the run was carried out.
    pub notes: Vec<String>,
    pub seeds: Vec<SeedResult>,
    pub accuracy: Stat,
    pub macro_f1: Stat,
}

impl RunSummary {
    pub fn new(mode: Mode, notes: Vec<String>, seeds: Vec<SeedResult>) -> Self {
        let acc: Vec<f64> = seeds.iter().map(|s| s.report.accuracy).collect();
        let f1: Vec<f64> = seeds.iter().map(|s| s.report.macro_f1).collect();
        RunSummary {
            mode,
            notes,
            accuracy: Stat::of(&acc),
            macro_f1: Stat::of(&f1),
            seeds,
        }
    }
}

fn metric_records(report: &MetricsReport) -> Vec<(String, f64)> {
    let mut out = vec![
        ("accuracy".to_string(), report.accuracy),
        ("macro_f1".to_string(), report.macro_f1),
    ];
    for (i, c) in report.per_class.iter().enumerate() {
        let name = AspectPolarity::from_index(i).map_or_else(|| i.to_string(), |p| p.name().to_string());
        out.push((format!("precision.{name}"), c.precision));
        out.push((format!("recall.{name}"), c.recall));
        out.push((format!("f1.{name}"), c.f1));
    }
    out
}

/// One JSON record per line: notes, per-seed metrics, then mean and std.
pub fn report_lines(summary: &RunSummary) -> String {
    let mode = summary.mode.name();
    let mut out = String::new();
    for note in &summary.notes {
        let _ = writeln!(out, "{}", json!({"kind": "note", "mode": mode, "text": note}));
    }
    for s in &summary.seeds {
        for (metric, value) in metric_records(&s.report) {
            let _ = writeln!(
                out,
                "{}",
                json!({"kind": "seed", "mode": mode, "seed": s.seed, "metric": metric, "value": value})
            );
        }
        let _ = writeln!(
            out,
            "{}",
            json!({"kind": "seed", "mode": mode, "seed": s.seed, "metric": "best_epoch", "value": s.log.best_epoch})
        );
    }
    for (kind, pick) in [("mean", 0), ("std", 1)] {
        for (metric, stat) in [("accuracy", summary.accuracy), ("macro_f1", summary.macro_f1)] {
            let value = if pick == 0 { stat.mean } else { stat.std };
            let _ = writeln!(out, "{}", json!({"kind": kind, "mode": mode, "metric": metric, "value": value}));
        }
    }
    out
}

/// Per-epoch training log as JSON lines.
pub fn log_lines(log: &TrainLog) -> String {
    let mut out = String::new();
    for e in &log.epochs {
        let _ = writeln!(out, "{}", json!({"objective": log.objective, "epoch": e}));
    }
    out
}

/// Short human-readable summary, percentages to two decimals.
pub fn summary_text(summary: &RunSummary) -> String {
    let mut out = String::new();
    for note in &summary.notes {
        let _ = writeln!(out, "note: {note}");
    }
    for s in &summary.seeds {
        let _ = writeln!(
            out,
            "seed {:>3}: accuracy {:.2}  macro-F1 {:.2}",
            s.seed, s.report.accuracy, s.report.macro_f1
        );
    }
    let _ = writeln!(
        out,
        "{}: accuracy {:.2} ± {:.2}  macro-F1 {:.2} ± {:.2}  ({} seeds)",
        summary.mode.name(),
        summary.accuracy.mean,
        summary.accuracy.std,
        summary.macro_f1.mean,
        summary.macro_f1.std,
        summary.seeds.len()
    );
    out
}

/// A simple line plot of `points` as a standalone SVG document.
pub fn line_plot_svg(title: &str, x_label: &str, y_label: &str, points: &[(f64, f64)]) -> String {
    let (w, h, margin) = (480.0, 320.0, 50.0);
    let bounds = |vals: Vec<f64>| {
        let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() {
            (0.0, 1.0)
        } else if hi - lo < 1e-9 {
            (lo - 0.5, hi + 0.5)
        } else {
            (lo, hi)
        }
    };
    let (x0, x1) = bounds(points.iter().map(|p| p.0).collect());
    let (y0, y1) = bounds(points.iter().map(|p| p.1).collect());
    let sx = |x: f64| margin + (x - x0) / (x1 - x0) * (w - 2.0 * margin);
    let sy = |y: f64| h - margin - (y - y0) / (y1 - y0) * (h - 2.0 * margin);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"11\">"
    );
    let _ = writeln!(svg, "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>");
    let _ = writeln!(svg, "<text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"13\">{title}</text>", w / 2.0);
    let _ = writeln!(
        svg,
        "<line x1=\"{margin}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n<line x1=\"{margin}\" y1=\"{margin}\" x2=\"{margin}\" y2=\"{b}\" stroke=\"black\"/>",
        b = h - margin,
        r = w - margin
    );
    for (x, y) in points {
        let _ = writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{x}</text>",
            sx(*x),
            h - margin + 15.0
        );
        let _ = writeln!(svg, "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"3\" fill=\"steelblue\"/>", sx(*x), sy(*y));
    }
    for y in [y0, (y0 + y1) / 2.0, y1] {
        let _ = writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{y:.2}</text>",
            margin - 5.0,
            sy(y) + 4.0
        );
    }
    let path: Vec<String> = points.iter().map(|(x, y)| format!("{:.1},{:.1}", sx(*x), sy(*y))).collect();
    let _ = writeln!(svg, "<polyline points=\"{}\" fill=\"none\" stroke=\"steelblue\"/>", path.join(" "));
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{x_label}</text>",
        w / 2.0,
        h - 10.0
    );
    let _ = writeln!(
        svg,
        "<text x=\"14\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {})\">{y_label}</text>",
        h / 2.0,
        h / 2.0
    );
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stat_values() {
        let s = Stat::of(&[1.0, 2.0, 3.0]);
        assert_eq!(s.mean, 2.0);
        assert!((s.std - 1.0).abs() < 1e-15);
        assert_eq!(Stat::of(&[4.0]).std, 0.0);
    }

    #[test]
    fn report_lines_are_json() {
        let report = MetricsReport::from_predictions(&[0, 1, 2], &[0, 1, 1], 3).unwrap();
        let summary = RunSummary::new(
            Mode::Base,
            vec!["a note".into()],
            vec![SeedResult {
                seed: 4,
                report,
                log: TrainLog::default(),
            }],
        );
        let text = report_lines(&summary);
        for line in text.lines() {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            assert_eq!(v["mode"], "base");
        }
        assert!(text.contains("\"metric\":\"f1.neutral\""));
        assert!(summary_text(&summary).contains("base: accuracy 66.67"));
    }

    #[test]
    fn svg_has_one_marker_per_point() {
        let svg = line_plot_svg("t", "x", "y", &[(0.0, 1.0), (0.5, 2.0), (1.0, 1.5)]);
        assert_eq!(svg.matches("<circle").count(), 3);
        assert!(svg.starts_with("<svg"));
    }
}
