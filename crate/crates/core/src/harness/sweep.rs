//! Guidance-weight and teacher-data-size sweeps.

use std::fmt::Write as _;
use std::path::Path;

use serde_json::json;

use crate::error::{AtnError, Result};
use crate::harness::config::{Mode, RunConfig};
use crate::harness::report::{line_plot_svg, RunSummary};
use crate::harness::run::{pretrain_teacher, run, Prepared, TeacherSource};

pub const DEFAULT_LAMBDAS: [f64; 11] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];
pub const DEFAULT_FRACTIONS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub x: f64,
    pub summary: RunSummary,
}

fn sorted(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return Err(AtnError::Config("sweep values must be finite and nonempty".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    Ok(v)
}

/// Machine-readable sweep table, one record per point and metric.
pub fn sweep_table(parameter: &str, points: &[SweepPoint]) -> String {
    let mut out = String::new();
    for p in points {
        for (metric, stat) in [("accuracy", p.summary.accuracy), ("macro_f1", p.summary.macro_f1)] {
            let _ = writeln!(
                out,
                "{}",
                json!({"parameter": parameter, "value": p.x, "mode": p.summary.mode.name(),
                       "metric": metric, "mean": stat.mean, "std": stat.std, "seeds": p.summary.seeds.len()})
            );
        }
    }
    out
}

fn write_outputs(out: Option<&Path>, parameter: &str, title: &str, points: &[SweepPoint]) -> Result<()> {
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("sweep.jsonl"), sweep_table(parameter, points))?;
        let curve: Vec<(f64, f64)> = points.iter().map(|p| (p.x, p.summary.accuracy.mean)).collect();
        std::fs::write(dir.join("sweep.svg"), line_plot_svg(title, parameter, "accuracy (%)", &curve))?;
    }
    Ok(())
}

/// Guidance runs at each `lambda` (ascending) against one teacher.
pub fn sweep_lambda(
    config: &RunConfig,
    prepared: &Prepared,
    teacher: &TeacherSource,
    values: &[f64],
    out: Option<&Path>,
) -> Result<Vec<SweepPoint>> {
    let mut points = Vec::new();
    for x in sorted(values)? {
        let cfg = RunConfig {
            mode: Mode::Ag,
            lambda: x,
            ..config.clone()
        };
        let dir = out.map(|d| d.join(format!("lambda-{x}")));
        points.push(SweepPoint {
            x,
            summary: run(&cfg, prepared, teacher, dir.as_deref())?,
        });
    }
    write_outputs(out, "lambda", "Guidance weight", &points)?;
    Ok(points)
}

/// Re-pretrains the teacher on each fraction of the reviews and runs
/// `config.mode` (guidance or fusion) against it.
pub fn sweep_dsc_fraction(config: &RunConfig, prepared: &Prepared, fractions: &[f64], out: Option<&Path>) -> Result<Vec<SweepPoint>> {
    if config.mode == Mode::Base {
        return Err(AtnError::Config("the teacher-data sweep needs mode ag or af".into()));
    }
    let mut points = Vec::new();
    for x in sorted(fractions)? {
        if !(0.0..=1.0).contains(&x) {
            return Err(AtnError::Config(format!("fraction {x} outside [0, 1]")));
        }
        let cfg = RunConfig {
            dsc_fraction: x,
            ..config.clone()
        };
        let seed = cfg.seeds.first().copied().unwrap_or(1);
        let teacher = match pretrain_teacher(prepared, &cfg, x, seed)? {
            Some(run) => TeacherSource::Pretrained(Box::new(run)),
            None => TeacherSource::None,
        };
        let dir = out.map(|d| d.join(format!("fraction-{x}")));
        points.push(SweepPoint {
            x,
            summary: run(&cfg, prepared, &teacher, dir.as_deref())?,
        });
    }
    write_outputs(out, "dsc_fraction", "Teacher data fraction", &points)?;
    Ok(points)
}
