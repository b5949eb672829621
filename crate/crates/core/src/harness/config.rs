//! Flat `key = value` run configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::asc::{AscConfig, StudentTrainConfig};
use crate::corpus::{MinCounts, DEFAULT_MAX_DOC_LEN};
use crate::dsc::{DscConfig, PretrainConfig};
use crate::error::{AtnError, Result};
use crate::train::Schedule;
use crate::transfer::{GuidanceConfig, Normalization};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Base,
    Ag,
    Af,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Base => "base",
            Mode::Ag => "ag",
            Mode::Af => "af",
        }
    }

    /// Checkpoint tag for a student trained in this mode.
    pub fn tag(self) -> &'static str {
        match self {
            Mode::Base => "asc",
            Mode::Ag => "atn-ag",
            Mode::Af => "atn-af",
        }
    }
}

impl FromStr for Mode {
    type Err = AtnError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "base" => Ok(Mode::Base),
            "ag" => Ok(Mode::Ag),
            "af" => Ok(Mode::Af),
            _ => Err(AtnError::Config(format!("unknown mode {s:?} (expected base, ag or af)"))),
        }
    }
}

fn parse_normalization(s: &str) -> Result<Normalization> {
    match s {
        "softmax" => Ok(Normalization::Softmax),
        "linear" => Ok(Normalization::Linear),
        _ => Err(AtnError::Config(format!("unknown normalization {s:?}"))),
    }
}

fn normalization_name(n: Normalization) -> &'static str {
    match n {
        Normalization::Softmax => "softmax",
        Normalization::Linear => "linear",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub mode: Mode,
    pub aspect_train: Option<PathBuf>,
    pub aspect_test: Option<PathBuf>,
    /// Review corpus, one `label text` document per line.
    pub doc_corpus: Option<PathBuf>,
    pub word_vectors: Option<PathBuf>,
    /// Pretrained teacher to use instead of pretraining one.
    pub teacher_checkpoint: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub d_e: usize,
    pub d_h: usize,
    pub d_p: usize,
    pub max_position: usize,
    pub lr: f64,
    pub momentum: f64,
    pub dropout: f64,
    pub lambda: f64,
    pub normalization: Normalization,
    pub batch: usize,
    pub epochs: usize,
    pub teacher_epochs: usize,
    pub teacher_batch: usize,
    pub teacher_holdout: f64,
    pub seeds: Vec<u64>,
    pub dev_fraction: f64,
    pub dsc_fraction: f64,
    pub max_doc_len: usize,
    pub min_count_aspect: usize,
    pub min_count_doc: usize,
    /// Seed for word vectors missing from the vectors file.
    pub embedding_seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: Mode::Base,
            aspect_train: None,
            aspect_test: None,
            doc_corpus: None,
            word_vectors: None,
            teacher_checkpoint: None,
            out_dir: PathBuf::from("runs/default"),
            d_e: 300,
            d_h: 300,
            d_p: 100,
            max_position: 100,
            lr: 0.1,
            momentum: 0.9,
            dropout: 0.5,
            lambda: 0.4,
            normalization: Normalization::Softmax,
            batch: 32,
            epochs: 30,
            teacher_epochs: 5,
            teacher_batch: 64,
            teacher_holdout: 0.1,
            seeds: vec![1, 2, 3, 4, 5],
            dev_fraction: 0.2,
            dsc_fraction: 1.0,
            max_doc_len: DEFAULT_MAX_DOC_LEN,
            min_count_aspect: 1,
            min_count_doc: 2,
            embedding_seed: 1,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| AtnError::Config(format!("invalid value {value:?} for {key}")))
}

fn optional_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

impl RunConfig {
    /// Parses `key = value` lines over the defaults. `#` starts a comment.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut config = RunConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| AtnError::Config(format!("line {}: expected key = value", idx + 1)))?;
            config
                .set(key.trim(), value.trim())
                .map_err(|e| AtnError::Config(format!("line {}: {}", idx + 1, strip_prefix(&e))))?;
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    /// Sets one field from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "mode" => self.mode = value.parse()?,
            "aspect_train" => self.aspect_train = optional_path(value),
            "aspect_test" => self.aspect_test = optional_path(value),
            "doc_corpus" => self.doc_corpus = optional_path(value),
            "word_vectors" => self.word_vectors = optional_path(value),
            "teacher_checkpoint" => self.teacher_checkpoint = optional_path(value),
            "out_dir" => self.out_dir = PathBuf::from(value),
            "d_e" => self.d_e = parse(key, value)?,
            "d_h" => self.d_h = parse(key, value)?,
            "d_p" => self.d_p = parse(key, value)?,
            "max_position" => self.max_position = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "momentum" => self.momentum = parse(key, value)?,
            "dropout" => self.dropout = parse(key, value)?,
            "lambda" => self.lambda = parse(key, value)?,
            "normalization" => self.normalization = parse_normalization(value)?,
            "batch" => self.batch = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "teacher_epochs" => self.teacher_epochs = parse(key, value)?,
            "teacher_batch" => self.teacher_batch = parse(key, value)?,
            "teacher_holdout" => self.teacher_holdout = parse(key, value)?,
            "seeds" => {
                self.seeds = value
                    .split(',')
                    .map(|s| parse(key, s.trim()))
                    .collect::<Result<Vec<u64>>>()?
            }
            "dev_fraction" => self.dev_fraction = parse(key, value)?,
            "dsc_fraction" => self.dsc_fraction = parse(key, value)?,
            "max_doc_len" => self.max_doc_len = parse(key, value)?,
            "min_count_aspect" => self.min_count_aspect = parse(key, value)?,
            "min_count_doc" => self.min_count_doc = parse(key, value)?,
            "embedding_seed" => self.embedding_seed = parse(key, value)?,
            _ => return Err(AtnError::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Model and schedule sizes for the generated synthetic task with
    /// `dim`-dimensional word vectors. Data paths are left unset.
    pub fn synthetic(dim: usize) -> Self {
        RunConfig {
            d_e: dim,
            d_h: 16,
            d_p: 8,
            max_position: 20,
            batch: 8,
            epochs: 40,
            teacher_epochs: 20,
            min_count_doc: 1,
            ..RunConfig::default()
        }
    }

    /// Every field in `key = value` form; parses back to an equal config.
    pub fn to_text(&self) -> String {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("mode", self.mode.name().into());
        kv("aspect_train", path(&self.aspect_train));
        kv("aspect_test", path(&self.aspect_test));
        kv("doc_corpus", path(&self.doc_corpus));
        kv("word_vectors", path(&self.word_vectors));
        kv("teacher_checkpoint", path(&self.teacher_checkpoint));
        kv("out_dir", self.out_dir.display().to_string());
        kv("d_e", self.d_e.to_string());
        kv("d_h", self.d_h.to_string());
        kv("d_p", self.d_p.to_string());
        kv("max_position", self.max_position.to_string());
        kv("lr", self.lr.to_string());
        kv("momentum", self.momentum.to_string());
        kv("dropout", self.dropout.to_string());
        kv("lambda", self.lambda.to_string());
        kv("normalization", normalization_name(self.normalization).into());
        kv("batch", self.batch.to_string());
        kv("epochs", self.epochs.to_string());
        kv("teacher_epochs", self.teacher_epochs.to_string());
        kv("teacher_batch", self.teacher_batch.to_string());
        kv("teacher_holdout", self.teacher_holdout.to_string());
        kv("seeds", seeds.join(","));
        kv("dev_fraction", self.dev_fraction.to_string());
        kv("dsc_fraction", self.dsc_fraction.to_string());
        kv("max_doc_len", self.max_doc_len.to_string());
        kv("min_count_aspect", self.min_count_aspect.to_string());
        kv("min_count_doc", self.min_count_doc.to_string());
        kv("embedding_seed", self.embedding_seed.to_string());
        out
    }

    /// Joins relative data paths onto `root`. The output directory is left alone.
    pub fn resolve_data_root(&mut self, root: &Path) {
        for p in [
            &mut self.aspect_train,
            &mut self.aspect_test,
            &mut self.doc_corpus,
            &mut self.word_vectors,
            &mut self.teacher_checkpoint,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = root.join(&*p);
            }
        }
    }

    /// Range checks on every field.
    pub fn validate(&self) -> Result<()> {
        let fraction = |name: &str, v: f64, hi_open: bool| {
            let ok = if hi_open { (0.0..1.0).contains(&v) } else { (0.0..=1.0).contains(&v) };
            if ok {
                Ok(())
            } else {
                Err(AtnError::Config(format!("{name} = {v} is out of range")))
            }
        };
        if self.d_e == 0 || self.d_h == 0 || self.max_position == 0 {
            return Err(AtnError::Config("d_e, d_h and max_position must be positive".into()));
        }
        if self.seeds.is_empty() {
            return Err(AtnError::Config("at least one seed is required".into()));
        }
        if self.teacher_batch == 0 {
            return Err(AtnError::Config("teacher_batch must be positive".into()));
        }
        self.guidance().validate()?;
        self.schedule().validate()?;
        fraction("dev_fraction", self.dev_fraction, true)?;
        fraction("teacher_holdout", self.teacher_holdout, true)?;
        fraction("dsc_fraction", self.dsc_fraction, false)?;
        Ok(())
    }

    /// [`validate`](Self::validate) plus existence of every configured input file.
    pub fn validate_paths(&self) -> Result<()> {
        self.validate()?;
        for (name, p) in [("aspect_train", &self.aspect_train), ("aspect_test", &self.aspect_test)] {
            if p.is_none() {
                return Err(AtnError::Config(format!("{name} is required")));
            }
        }
        for p in [
            &self.aspect_train,
            &self.aspect_test,
            &self.doc_corpus,
            &self.word_vectors,
            &self.teacher_checkpoint,
        ]
        .into_iter()
        .flatten()
        {
            if !p.exists() {
                return Err(AtnError::Config(format!("{} does not exist", p.display())));
            }
        }
        Ok(())
    }

    pub fn schedule(&self) -> Schedule {
        Schedule {
            lr: self.lr,
            momentum: self.momentum,
            dropout: self.dropout,
            batch: self.batch,
            epochs: self.epochs,
        }
    }

    pub fn student_train(&self, seed: u64) -> StudentTrainConfig {
        StudentTrainConfig {
            schedule: self.schedule(),
            seed,
            stop_at_train_accuracy: None,
        }
    }

    pub fn asc(&self) -> AscConfig {
        AscConfig {
            d_e: self.d_e,
            d_h: self.d_h,
            d_p: self.d_p,
            max_position: self.max_position,
        }
    }

    pub fn dsc(&self) -> DscConfig {
        DscConfig {
            d_e: self.d_e,
            d_h: self.d_h,
        }
    }

    pub fn pretrain(&self, seed: u64) -> PretrainConfig {
        PretrainConfig {
            schedule: Schedule {
                batch: self.teacher_batch,
                epochs: self.teacher_epochs,
                ..self.schedule()
            },
            holdout: self.teacher_holdout,
            seed,
        }
    }

    pub fn guidance(&self) -> GuidanceConfig {
        GuidanceConfig {
            lambda: self.lambda,
            normalization: self.normalization,
        }
    }

    pub fn min_counts(&self) -> MinCounts {
        MinCounts {
            aspect: self.min_count_aspect,
            doc: self.min_count_doc,
        }
    }
}

fn strip_prefix(e: &AtnError) -> String {
    match e {
        AtnError::Config(m) => m.clone(),
        other => other.to_string(),
    }
}
