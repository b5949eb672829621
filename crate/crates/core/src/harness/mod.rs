//! Orchestration: configuration, runs over seeds, sweeps, checkpoints,
//! reports and heatmaps.

pub mod checkpoint;
pub mod config;
pub mod heatmap;
pub mod report;
pub mod run;
pub mod sweep;

pub use checkpoint::{Checkpoint, NamedTensor};
pub use config::{Mode, RunConfig};
pub use heatmap::{export_heatmap, render_heatmap, HeatmapRow};
pub use report::{report_lines, summary_text, RunSummary, SeedResult, Stat};
pub use run::{
    acquire_teacher, evaluate_loaded, load_student, load_teacher, pretrain_teacher, run, train_seed, LoadedStudent, Prepared,
    TeacherSource,
};
pub use sweep::{sweep_dsc_fraction, sweep_lambda, SweepPoint};

/// Environment variable naming the directory relative data paths are read from.
pub const DATA_ROOT_ENV: &str = "ATN_DATA_ROOT";
