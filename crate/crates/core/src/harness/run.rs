//! Data preparation, teacher acquisition and multi-seed student runs.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::asc::{evaluate_student, train_base_asc, AscModel, BaseObjective, EncodedAspect, StudentObjective};
use crate::corpus::{
    build_vocab_per_corpus, load_aspect_file, load_doc_corpus, load_word_vectors, subsample_docs, AspectSample,
    DocSample, EmbeddingMatrix, LabelScheme, Vocabulary,
};
use crate::dsc::{pretrain_dsc, DscModel, EncodedDoc, PretrainLog};
use crate::error::{AtnError, Result};
use crate::harness::checkpoint::Checkpoint;
use crate::harness::config::{Mode, RunConfig};
use crate::harness::report::{log_lines, report_lines, summary_text, RunSummary, SeedResult};
use crate::kernels::RngState;
use crate::metrics::MetricsReport;
use crate::train::holdout_split;
use crate::transfer::{atn_af_train, atn_ag_train, FusionGate, FusionObjective, GuidanceConfig, GuidanceObjective, Teacher};

/// Reference recorded by fusion checkpoints trained against the uniform teacher.
pub const UNIFORM_TEACHER: &str = "uniform";

/// Encoded datasets plus the shared vocabulary and frozen word vectors.
pub struct Prepared {
    pub vocab: Vocabulary,
    pub embedding: Arc<EmbeddingMatrix>,
    pub train: Vec<EncodedAspect>,
    pub test: Vec<EncodedAspect>,
    pub test_samples: Vec<AspectSample>,
    pub docs: Vec<DocSample>,
}

impl Prepared {
    /// Reads every configured input and builds the vocabulary over all of them.
    pub fn load(config: &RunConfig) -> Result<Self> {
        config.validate_paths()?;
        let train = load_aspect_file(config.aspect_train.as_deref().expect("validated"))?.samples;
        let test = load_aspect_file(config.aspect_test.as_deref().expect("validated"))?.samples;
        let docs = match &config.doc_corpus {
            Some(p) => load_doc_corpus(p, LabelScheme::LeadingField, config.max_doc_len)?,
            None => Vec::new(),
        };
        let all: Vec<AspectSample> = train.iter().chain(&test).cloned().collect();
        let vocab = build_vocab_per_corpus(&all, &docs, config.min_counts());
        let mut rng = RngState::new(config.embedding_seed);
        let embedding = match &config.word_vectors {
            Some(p) => load_word_vectors(p, &vocab, config.d_e, &mut rng)?.0,
            None => EmbeddingMatrix::random(vocab.len(), config.d_e, &mut rng),
        };
        Self::from_parts(vocab, embedding, &train, &test, docs)
    }

    pub fn from_parts(
        vocab: Vocabulary,
        embedding: EmbeddingMatrix,
        train: &[AspectSample],
        test: &[AspectSample],
        docs: Vec<DocSample>,
    ) -> Result<Self> {
        if !embedding.is_frozen() {
            return Err(AtnError::Contract("word embeddings must be frozen".into()));
        }
        if embedding.rows() != vocab.len() {
            return Err(AtnError::arg("embedding rows do not match the vocabulary"));
        }
        let encode = |s: &[AspectSample]| s.iter().map(|a| EncodedAspect::new(a, &vocab)).collect::<Result<Vec<_>>>();
        Ok(Prepared {
            train: encode(train)?,
            test: encode(test)?,
            test_samples: test.to_vec(),
            embedding: Arc::new(embedding),
            vocab,
            docs,
        })
    }

    fn check_dims(&self, config: &RunConfig) -> Result<()> {
        if self.embedding.dim() != config.d_e {
            return Err(AtnError::Config(format!(
                "d_e = {} but word vectors have {} dimensions",
                config.d_e,
                self.embedding.dim()
            )));
        }
        Ok(())
    }
}

pub struct TeacherRun {
    pub model: DscModel,
    pub log: PretrainLog,
    pub documents: usize,
}

/// Pretrains and freezes a teacher on a seeded `fraction` of the review
/// corpus. `None` when that leaves no documents.
pub fn pretrain_teacher(prepared: &Prepared, config: &RunConfig, fraction: f64, seed: u64) -> Result<Option<TeacherRun>> {
    prepared.check_dims(config)?;
    let docs = subsample_docs(&prepared.docs, fraction, seed);
    if docs.is_empty() {
        return Ok(None);
    }
    let encoded: Vec<EncodedDoc> = docs.iter().map(|d| EncodedDoc::new(d, &prepared.vocab)).collect();
    let mut model = DscModel::new(config.dsc(), Arc::clone(&prepared.embedding), &mut RngState::new(seed))?;
    let log = pretrain_dsc(&mut model, &encoded, &config.pretrain(seed))?;
    model.freeze();
    Ok(Some(TeacherRun {
        model,
        log,
        documents: encoded.len(),
    }))
}

pub fn teacher_checkpoint(teacher: &DscModel, config: &RunConfig) -> Checkpoint {
    Checkpoint::from_store("dsc", &config.to_text(), teacher.params())
}

/// Loads a `dsc` checkpoint into a frozen teacher. Model sizes come from
/// the checkpoint's own configuration snapshot.
pub fn load_teacher(path: &Path, prepared: &Prepared) -> Result<(DscModel, Checkpoint)> {
    let ckpt = Checkpoint::load(path)?;
    ckpt.expect_tag("dsc")?;
    let snapshot = RunConfig::from_text(&ckpt.config)?;
    let mut model = DscModel::new(snapshot.dsc(), Arc::clone(&prepared.embedding), &mut RngState::new(0))?;
    ckpt.apply_to(model.params_mut()?)?;
    model.freeze();
    Ok((model, ckpt))
}

/// A student restored from a checkpoint.
pub struct LoadedStudent {
    pub model: AscModel,
    pub gate: Option<FusionGate>,
    pub checkpoint: Checkpoint,
}

pub fn load_student(path: &Path, prepared: &Prepared) -> Result<LoadedStudent> {
    let ckpt = Checkpoint::load(path)?;
    let fused = match ckpt.tag.as_str() {
        "asc" | "atn-ag" => false,
        "atn-af" => true,
        other => return Err(AtnError::Checkpoint(format!("{other:?} is not a student checkpoint"))),
    };
    let snapshot = RunConfig::from_text(&ckpt.config)?;
    let mut rng = RngState::new(0);
    let mut model = AscModel::new(snapshot.asc(), Arc::clone(&prepared.embedding), &mut rng)?;
    let gate = if fused { Some(FusionGate::attach(&mut model, &mut rng)?) } else { None };
    ckpt.apply_to(model.params_mut())?;
    Ok(LoadedStudent {
        model,
        gate,
        checkpoint: ckpt,
    })
}

/// Scores a student on `samples` with the inference rule of its mode.
pub fn evaluate_loaded(student: &LoadedStudent, teacher: Option<&DscModel>, samples: &[EncodedAspect]) -> Result<MetricsReport> {
    match student.gate {
        None => evaluate_student(&student.model, &BaseObjective, samples),
        Some(gate) => {
            let teacher = match (teacher, student.checkpoint.reference.as_str()) {
                (_, UNIFORM_TEACHER) => Teacher::Uniform,
                (Some(t), _) => Teacher::Model(t),
                (None, _) => return Err(AtnError::Contract("fusion models need their teacher at inference".into())),
            };
            let normalization = RunConfig::from_text(&student.checkpoint.config)?.normalization;
            let objective = FusionObjective::new(teacher, gate, normalization)?;
            evaluate_student(&student.model, &objective, samples)
        }
    }
}

/// Fails unless `student` was trained against `teacher`.
pub fn verify_teacher_reference(student: &Checkpoint, teacher: &Checkpoint) -> Result<()> {
    let hash = teacher.content_hash();
    if student.reference != hash {
        return Err(AtnError::Checkpoint(format!(
            "student was trained against teacher {}, got {hash}",
            student.reference
        )));
    }
    Ok(())
}

/// The trained student of one seed.
pub struct SeedOutcome {
    pub model: AscModel,
    pub gate: Option<FusionGate>,
    pub result: SeedResult,
}

/// Trains one student: re-splits dev from train with `seed`, trains in
/// `config.mode`, and scores the best-dev parameters on the test set.
pub fn train_seed(prepared: &Prepared, config: &RunConfig, teacher: Option<&DscModel>, seed: u64) -> Result<SeedOutcome> {
    prepared.check_dims(config)?;
    let (train_idx, dev_idx) = holdout_split(prepared.train.len(), config.dev_fraction, &mut RngState::new(seed));
    let pick = |idx: &[usize]| idx.iter().map(|i| prepared.train[*i].clone()).collect::<Vec<_>>();
    let (train, dev) = (pick(&train_idx), pick(&dev_idx));
    let mut model = AscModel::new(config.asc(), Arc::clone(&prepared.embedding), &mut RngState::new(seed))?;
    let train_cfg = config.student_train(seed);
    let source = teacher.map_or(Teacher::Uniform, Teacher::Model);
    let (log, gate, report) = match config.mode {
        Mode::Base => {
            let log = train_base_asc(&mut model, &train, &dev, &train_cfg)?;
            let report = evaluate_student(&model, &BaseObjective, &prepared.test)?;
            (log, None, report)
        }
        Mode::Ag => {
            let guidance = GuidanceConfig {
                lambda: if teacher.is_some() { config.lambda } else { 0.0 },
                ..config.guidance()
            };
            let log = atn_ag_train(&mut model, source, &train, &dev, guidance, &train_cfg)?;
            let objective = GuidanceObjective::new(source, guidance)?;
            let report = evaluate_student(&model, &objective, &prepared.test)?;
            (log, None, report)
        }
        Mode::Af => {
            let (gate, log) = atn_af_train(&mut model, source, &train, &dev, config.normalization, &train_cfg)?;
            let objective = FusionObjective::new(source, gate, config.normalization)?;
            let report = evaluate_student(&model, &objective as &dyn StudentObjective, &prepared.test)?;
            (log, Some(gate), report)
        }
    };
    Ok(SeedOutcome {
        model,
        gate,
        result: SeedResult { seed, report, log },
    })
}

/// How the teacher of a run was obtained.
pub enum TeacherSource {
    None,
    Loaded(Box<DscModel>, Checkpoint),
    Pretrained(Box<TeacherRun>),
}

impl TeacherSource {
    pub fn model(&self) -> Option<&DscModel> {
        match self {
            TeacherSource::None => None,
            TeacherSource::Loaded(m, _) => Some(m),
            TeacherSource::Pretrained(r) => Some(&r.model),
        }
    }
}

/// Loads the configured teacher checkpoint, or pretrains one on
/// `dsc_fraction` of the reviews (subsample seeded by the first run seed).
/// Base mode needs no teacher.
pub fn acquire_teacher(config: &RunConfig, prepared: &Prepared) -> Result<TeacherSource> {
    if config.mode == Mode::Base {
        return Ok(TeacherSource::None);
    }
    if let Some(path) = &config.teacher_checkpoint {
        let (model, ckpt) = load_teacher(path, prepared)?;
        return Ok(TeacherSource::Loaded(Box::new(model), ckpt));
    }
    let seed = config.seeds.first().copied().unwrap_or(1);
    Ok(match pretrain_teacher(prepared, config, config.dsc_fraction, seed)? {
        Some(run) => TeacherSource::Pretrained(Box::new(run)),
        None => TeacherSource::None,
    })
}

fn write(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents)?;
    Ok(())
}

/// Trains one student per seed and aggregates test scores. With `out`,
/// writes the resolved config, vocabulary, teacher, per-seed checkpoints and
/// logs, and the reports; per-seed files are written as each seed finishes.
pub fn run(config: &RunConfig, prepared: &Prepared, teacher: &TeacherSource, out: Option<&Path>) -> Result<RunSummary> {
    config.validate()?;
    let mut notes = Vec::new();
    let teacher_model = teacher.model();
    if teacher_model.is_none() {
        match config.mode {
            Mode::Ag => notes.push("no teacher data: guidance weight forced to 0".to_string()),
            Mode::Af => notes.push("no teacher data: fusion uses uniform teacher attention".to_string()),
            Mode::Base => {}
        }
    }
    let config_text = config.to_text();
    let mut reference = UNIFORM_TEACHER.to_string();
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        write(&dir.join("config.txt"), &config_text)?;
        prepared.vocab.save(&dir.join("vocab.txt"))?;
    }
    match teacher {
        TeacherSource::Loaded(_, ckpt) => reference = ckpt.content_hash(),
        TeacherSource::Pretrained(run) => {
            let ckpt = teacher_checkpoint(&run.model, config);
            reference = ckpt.content_hash();
            if let Some(dir) = out {
                ckpt.save(&dir.join("teacher.ckpt"))?;
            }
        }
        TeacherSource::None => {}
    }

    let mut results = Vec::with_capacity(config.seeds.len());
    for &seed in &config.seeds {
        let outcome = train_seed(prepared, config, teacher_model, seed)?;
        if let Some(dir) = out {
            let seed_dir = seed_dir(dir, seed);
            std::fs::create_dir_all(&seed_dir)?;
            let mut ckpt = Checkpoint::from_store(config.mode.tag(), &config_text, outcome.model.params());
            if config.mode == Mode::Af {
                ckpt.reference = reference.clone();
            }
            ckpt.save(&seed_dir.join("student.ckpt"))?;
            write(&seed_dir.join("log.jsonl"), &log_lines(&outcome.result.log))?;
        }
        results.push(outcome.result);
    }
    let summary = RunSummary::new(config.mode, notes, results);
    if let Some(dir) = out {
        write(&dir.join("report.jsonl"), &report_lines(&summary))?;
        write(&dir.join("summary.txt"), &summary_text(&summary))?;
    }
    Ok(summary)
}

/// Per-seed output directory of [`run`].
pub fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed-{seed}"))
}
