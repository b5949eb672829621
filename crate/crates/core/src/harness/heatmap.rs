//! Standalone HTML attention heatmaps.

use std::fmt::Write as _;
use std::path::Path;

use quick_xml::escape::escape;

use crate::attention::AttentionRecord;
use crate::error::{AtnError, Result};

/// One model variant's attention over the sentence.
pub struct HeatmapRow<'a> {
    pub label: &'a str,
    pub record: &'a AttentionRecord,
    pub prediction: Option<&'a str>,
}

/// Background intensity per token: weight divided by the row maximum.
pub fn intensities(weights: &[f64]) -> Vec<f64> {
    let max = weights.iter().cloned().fold(0.0, f64::max);
    if max <= 0.0 {
        return vec![0.0; weights.len()];
    }
    weights.iter().map(|w| w / max).collect()
}

/// Renders the heatmap document. `target` is the 1-based inclusive span.
pub fn render_heatmap(tokens: &[String], target: (usize, usize), rows: &[HeatmapRow<'_>], gold: &str) -> Result<String> {
    let (lo, hi) = target;
    if lo < 1 || lo > hi || hi > tokens.len() {
        return Err(AtnError::arg("target span out of bounds"));
    }
    let mut html = String::from(
        "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n<title>attention</title>\n<style>\n\
         body { font-family: sans-serif; }\n\
         td { padding: 4px 8px; vertical-align: top; }\n\
         .tok { padding: 1px 3px; margin: 0 1px; border-radius: 2px; }\n\
         .target { font-weight: bold; }\n\
         </style>\n</head>\n<body>\n<table>\n",
    );
    for row in rows {
        if row.record.len() != tokens.len() {
            return Err(AtnError::arg(format!(
                "row {:?} has {} weights for {} tokens",
                row.label,
                row.record.len(),
                tokens.len()
            )));
        }
        let _ = write!(html, "<tr><td>{}</td><td>", escape(row.label));
        for (i, (tok, x)) in tokens.iter().zip(intensities(&row.record.weights)).enumerate() {
            let pos = i + 1;
            if pos == lo {
                html.push('[');
            }
            let class = if (lo..=hi).contains(&pos) { "tok target" } else { "tok" };
            let tok = escape(tok.as_str());
            let _ = write!(
                html,
                "<span class=\"{class}\" data-weight=\"{w:e}\" data-intensity=\"{x:.6}\" \
                 style=\"background-color: rgba(200, 30, 30, {x:.6})\">",
                w = row.record.weights[i],
            );
            if class == "tok target" {
                let _ = write!(html, "<b>{tok}</b>");
            } else {
                html.push_str(&tok);
            }
            html.push_str("</span>");
            if pos == hi {
                html.push(']');
            }
            html.push(' ');
        }
        html.push_str("</td><td>");
        if let Some(p) = row.prediction {
            let mark = if p == gold { "correct" } else { "wrong" };
            let _ = write!(html, "pred: {} ({mark})", escape(p));
        }
        let _ = writeln!(html, " gold: {}</td></tr>", escape(gold));
    }
    html.push_str("</table>\n</body>\n</html>\n");
    Ok(html)
}

pub fn export_heatmap(
    path: &Path,
    tokens: &[String],
    target: (usize, usize),
    rows: &[HeatmapRow<'_>],
    gold: &str,
) -> Result<()> {
    std::fs::write(path, render_heatmap(tokens, target, rows, gold)?)?;
    Ok(())
}

/// Reads back the `data-intensity` values of every token, row by row.
pub fn parse_intensities(html: &str) -> Vec<Vec<f64>> {
    html.lines()
        .filter(|l| l.starts_with("<tr>"))
        .map(|l| {
            l.split("data-intensity=\"")
                .skip(1)
                .filter_map(|s| s.split('"').next()?.parse().ok())
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::AttentionKind;

    fn tokens() -> Vec<String> {
        ["the", "food", "was", "<great>"].iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn uniform_row_has_equal_intensity() {
        let rec = AttentionRecord::new(vec![0.25; 4], AttentionKind::Beta);
        let rows = [HeatmapRow {
            label: "base",
            record: &rec,
            prediction: Some("positive"),
        }];
        let html = render_heatmap(&tokens(), (2, 2), &rows, "positive").unwrap();
        assert_eq!(parse_intensities(&html), vec![vec![1.0; 4]]);
        assert!(html.contains("[<span class=\"tok target\""));
        assert!(html.contains("<b>food</b></span>]"));
        assert!(html.contains("&lt;great&gt;"));
        assert!(html.contains("(correct)"));
    }

    #[test]
    fn one_hot_row_saturates_single_token() {
        let rec = AttentionRecord::new(vec![0.0, 0.0, 1.0, 0.0], AttentionKind::Gamma);
        let rows = [HeatmapRow {
            label: "af",
            record: &rec,
            prediction: Some("negative"),
        }];
        let html = render_heatmap(&tokens(), (2, 2), &rows, "positive").unwrap();
        assert_eq!(parse_intensities(&html), vec![vec![0.0, 0.0, 1.0, 0.0]]);
        assert!(html.contains("(wrong)"));
    }

    #[test]
    fn misaligned_record_rejected() {
        let rec = AttentionRecord::new(vec![1.0], AttentionKind::Beta);
        let rows = [HeatmapRow {
            label: "x",
            record: &rec,
            prediction: None,
        }];
        assert!(render_heatmap(&tokens(), (1, 1), &rows, "neutral").is_err());
    }
}
