use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use atn_core::asc::{BaseObjective, StudentObjective};
use atn_core::corpus::AspectPolarity;
use atn_core::dsc::DscModel;
use atn_core::harness::checkpoint::Checkpoint;
use atn_core::harness::heatmap::{export_heatmap, HeatmapRow};
use atn_core::harness::run::{teacher_checkpoint, verify_teacher_reference, UNIFORM_TEACHER};
use atn_core::harness::sweep::{DEFAULT_FRACTIONS, DEFAULT_LAMBDAS};
use atn_core::harness::{
    acquire_teacher, evaluate_loaded, load_student, load_teacher, pretrain_teacher, run, summary_text,
    sweep_dsc_fraction, sweep_lambda, Mode, Prepared, RunConfig, TeacherSource, DATA_ROOT_ENV,
};
use atn_core::metrics::argmax;
use atn_core::synthetic::{generate, write_aspect_xml, write_doc_corpus, write_word_vectors, SyntheticConfig};
use atn_core::transfer::{FusionObjective, Teacher};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "atn", version, about = "Attention transfer from document-level to aspect-level sentiment models")]
struct Cli {
    /// Directory that relative data paths in the config are read from.
    #[arg(long, global = true, env = DATA_ROOT_ENV)]
    data_root: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    mode: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated seeds.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    teacher: Option<PathBuf>,
    /// Any other config key, as KEY=VALUE. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Pretrain and freeze the document-level teacher.
    PretrainDsc(Common),
    /// Train students over all seeds and report test scores.
    Train(Common),
    /// Score a saved student on the test set.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Guidance runs over a range of guidance weights.
    SweepLambda {
        #[command(flatten)]
        common: Common,
        /// Comma-separated weights.
        #[arg(long)]
        values: Option<String>,
    },
    /// Runs with teachers pretrained on growing fractions of the reviews.
    SweepDsc {
        #[command(flatten)]
        common: Common,
        /// Comma-separated fractions in [0, 1].
        #[arg(long)]
        fractions: Option<String>,
    },
    /// Write an HTML attention heatmap for one test sample.
    Visualize {
        #[command(flatten)]
        common: Common,
        /// Student checkpoints, one heatmap row each.
        #[arg(long = "checkpoint", required = true)]
        checkpoints: Vec<PathBuf>,
        /// Test sample index.
        #[arg(long, default_value_t = 0)]
        index: usize,
        /// Output HTML file.
        #[arg(long)]
        html: PathBuf,
    },
    /// Write a synthetic corpus, word vectors and a matching config.
    GenerateSynthetic {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        documents: Option<usize>,
    },
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|v| v.trim().parse::<f64>().with_context(|| format!("bad number {v:?}")))
        .collect()
}

fn resolve(common: &Common, data_root: Option<&Path>) -> Result<RunConfig> {
    let mut config = match &common.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => RunConfig::default(),
    };
    if let Some(m) = &common.mode {
        config.set("mode", m)?;
    }
    if let Some(o) = &common.out {
        config.out_dir = o.clone();
    }
    if let Some(s) = &common.seeds {
        config.set("seeds", s)?;
    }
    if let Some(e) = common.epochs {
        config.epochs = e;
    }
    if let Some(l) = common.lambda {
        config.lambda = l;
    }
    if let Some(t) = &common.teacher {
        config.teacher_checkpoint = Some(t.clone());
    }
    for kv in &common.set {
        let (k, v) = kv.split_once('=').with_context(|| format!("--set expects KEY=VALUE, got {kv:?}"))?;
        config.set(k.trim(), v.trim())?;
    }
    if let Some(root) = data_root {
        config.resolve_data_root(root);
    }
    config.validate_paths()?;
    Ok(config)
}

fn print_summary(out: &Path, text: &str) {
    print!("{text}");
    println!("outputs in {}", out.display());
}

/// The teacher a fusion checkpoint was trained against: the configured
/// teacher checkpoint, else `teacher.ckpt` two levels up from the student.
fn fusion_teacher(config: &RunConfig, student: &Path, prepared: &Prepared) -> Result<Option<(DscModel, Checkpoint)>> {
    let candidate = config.teacher_checkpoint.clone().or_else(|| {
        let p = student.parent()?.parent()?.join("teacher.ckpt");
        p.exists().then_some(p)
    });
    candidate.map(|p| load_teacher(&p, prepared)).transpose().map_err(Into::into)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let root = cli.data_root.as_deref();
    match cli.command {
        Command::PretrainDsc(common) => {
            let config = resolve(&common, root)?;
            let prepared = Prepared::load(&config)?;
            let seed = config.seeds[0];
            let Some(teacher) = pretrain_teacher(&prepared, &config, config.dsc_fraction, seed)? else {
                bail!("no review documents to pretrain on (doc_corpus unset or dsc_fraction = 0)");
            };
            let out = &config.out_dir;
            std::fs::create_dir_all(out)?;
            std::fs::write(out.join("config.txt"), config.to_text())?;
            prepared.vocab.save(&out.join("vocab.txt"))?;
            teacher_checkpoint(&teacher.model, &config).save(&out.join("teacher.ckpt"))?;
            let mut log = String::new();
            for e in &teacher.log.epochs {
                log.push_str(&serde_json::to_string(e)?);
                log.push('\n');
            }
            std::fs::write(out.join("pretrain.jsonl"), log)?;
            for e in &teacher.log.epochs {
                println!(
                    "epoch {:>3}: loss {:.4}  held-out accuracy {:.2}",
                    e.epoch, e.mean_loss, e.heldout_accuracy
                );
            }
            println!("{} documents, best epoch {:?}", teacher.documents, teacher.log.best_epoch);
            println!("outputs in {}", out.display());
        }
        Command::Train(common) => {
            let config = resolve(&common, root)?;
            let prepared = Prepared::load(&config)?;
            let teacher = acquire_teacher(&config, &prepared)?;
            let summary = run(&config, &prepared, &teacher, Some(&config.out_dir))?;
            print_summary(&config.out_dir, &summary_text(&summary));
        }
        Command::Eval { common, checkpoint } => {
            let config = resolve(&common, root)?;
            let prepared = Prepared::load(&config)?;
            let student = load_student(&checkpoint, &prepared)?;
            let teacher = if student.gate.is_some() && student.checkpoint.reference != UNIFORM_TEACHER {
                let (model, ckpt) = fusion_teacher(&config, &checkpoint, &prepared)?
                    .context("fusion checkpoints need their teacher; pass --teacher")?;
                verify_teacher_reference(&student.checkpoint, &ckpt)?;
                Some(model)
            } else {
                None
            };
            let report = evaluate_loaded(&student, teacher.as_ref(), &prepared.test)?;
            println!("{}", serde_json::to_string(&report)?);
            println!("accuracy {:.2}  macro-F1 {:.2}", report.accuracy, report.macro_f1);
        }
        Command::SweepLambda { common, values } => {
            let mut config = resolve(&common, root)?;
            config.mode = Mode::Ag;
            let values = match values {
                Some(v) => parse_list(&v)?,
                None => DEFAULT_LAMBDAS.to_vec(),
            };
            let prepared = Prepared::load(&config)?;
            let teacher = acquire_teacher(&config, &prepared)?;
            if matches!(teacher, TeacherSource::None) {
                eprintln!("warning: no teacher available; every point trains with guidance weight 0");
            }
            let points = sweep_lambda(&config, &prepared, &teacher, &values, Some(&config.out_dir))?;
            for p in &points {
                println!(
                    "lambda {:>4}: accuracy {:.2} ± {:.2}  macro-F1 {:.2} ± {:.2}",
                    p.x, p.summary.accuracy.mean, p.summary.accuracy.std, p.summary.macro_f1.mean, p.summary.macro_f1.std
                );
            }
            println!("outputs in {}", config.out_dir.display());
        }
        Command::SweepDsc { common, fractions } => {
            let config = resolve(&common, root)?;
            let fractions = match fractions {
                Some(v) => parse_list(&v)?,
                None => DEFAULT_FRACTIONS.to_vec(),
            };
            let prepared = Prepared::load(&config)?;
            let points = sweep_dsc_fraction(&config, &prepared, &fractions, Some(&config.out_dir))?;
            for p in &points {
                println!(
                    "fraction {:>4}: accuracy {:.2} ± {:.2}  macro-F1 {:.2} ± {:.2}",
                    p.x, p.summary.accuracy.mean, p.summary.accuracy.std, p.summary.macro_f1.mean, p.summary.macro_f1.std
                );
            }
            println!("outputs in {}", config.out_dir.display());
        }
        Command::Visualize {
            common,
            checkpoints,
            index,
            html,
        } => {
            let config = resolve(&common, root)?;
            let prepared = Prepared::load(&config)?;
            let sample = prepared
                .test
                .get(index)
                .with_context(|| format!("test set has {} samples", prepared.test.len()))?;
            let raw = &prepared.test_samples[index];
            let mut labels = Vec::new();
            let mut outputs = Vec::new();
            let mut teacher_alpha = None;
            for path in &checkpoints {
                let student = load_student(path, &prepared)?;
                let label = path.display().to_string();
                let out = match student.gate {
                    None => BaseObjective.predict(&student.model, sample)?,
                    Some(gate) => {
                        let teacher = fusion_teacher(&config, path, &prepared)?;
                        let source = match (&teacher, student.checkpoint.reference.as_str()) {
                            (_, UNIFORM_TEACHER) => Teacher::Uniform,
                            (Some((m, ckpt)), _) => {
                                verify_teacher_reference(&student.checkpoint, ckpt)?;
                                Teacher::Model(m)
                            }
                            (None, _) => bail!("fusion checkpoint {label} needs its teacher; pass --teacher"),
                        };
                        if let (Some((m, _)), None) = (&teacher, &teacher_alpha) {
                            teacher_alpha = Some(m.teacher_attention(&sample.ids)?);
                        }
                        let normalization = RunConfig::from_text(&student.checkpoint.config)?.normalization;
                        FusionObjective::new(source, gate, normalization)?.predict(&student.model, sample)?
                    }
                };
                labels.push(label);
                outputs.push(out);
            }
            let preds: Vec<&str> = outputs
                .iter()
                .map(|o| AspectPolarity::from_index(argmax(&o.probs)).map_or("?", |p| p.name()))
                .collect();
            let mut rows: Vec<HeatmapRow> = labels
                .iter()
                .zip(&outputs)
                .zip(&preds)
                .map(|((label, out), pred)| HeatmapRow {
                    label,
                    record: &out.attention,
                    prediction: Some(pred),
                })
                .collect();
            if let Some(alpha) = &teacher_alpha {
                rows.insert(
                    0,
                    HeatmapRow {
                        label: "teacher",
                        record: alpha,
                        prediction: None,
                    },
                );
            }
            export_heatmap(
                &html,
                &raw.tokens,
                (raw.target_lo, raw.target_hi),
                &rows,
                raw.label.name(),
            )?;
            println!("wrote {}", html.display());
        }
        Command::GenerateSynthetic { out, seed, documents } => {
            let mut cfg = SyntheticConfig {
                seed,
                ..SyntheticConfig::default()
            };
            if let Some(d) = documents {
                cfg.documents = d;
            }
            let corpus = generate(&cfg)?;
            std::fs::create_dir_all(&out)?;
            let mut train = corpus.train.clone();
            train.extend(corpus.dev.iter().cloned());
            write_aspect_xml(&out.join("train.xml"), &train)?;
            write_aspect_xml(&out.join("test.xml"), &corpus.test)?;
            write_doc_corpus(&out.join("reviews.txt"), &corpus.documents)?;
            write_word_vectors(&out.join("vectors.txt"), &corpus.vocab, &corpus.embedding)?;
            let run_config = RunConfig {
                aspect_train: Some("train.xml".into()),
                aspect_test: Some("test.xml".into()),
                doc_corpus: Some("reviews.txt".into()),
                word_vectors: Some("vectors.txt".into()),
                out_dir: out.join("runs"),
                ..RunConfig::synthetic(cfg.dim)
            };
            std::fs::write(out.join("config.txt"), run_config.to_text())?;
            println!(
                "wrote {} documents, {} train and {} test sentences to {}",
                corpus.documents.len(),
                train.len(),
                corpus.test.len(),
                out.display()
            );
            println!("run with: atn train --config {} --data-root {}", out.join("config.txt").display(), out.display());
        }
    }
    Ok(())
}
