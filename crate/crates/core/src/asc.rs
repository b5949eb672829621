//! Aspect-level student: position-aware BiLSTM with target-query attention
//! and a three-way classifier.
//!
//! The forward pass is split in two stages so that transfer objectives can
//! replace or supervise the attention weights in between:
//! [`AscModel::trace`] encodes the sentence and computes the student
//! attention, [`AscModel::classify`] pools with any weight vector.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::attention::{AttentionKind, AttentionRecord};
use crate::corpus::{relative_distances, AspectSample, EmbeddingMatrix, Vocabulary};
use crate::error::{AtnError, Result};
use crate::kernels::{cross_entropy, GradBuffer, ParamStore, RngState, Tensor};
use crate::metrics::{evaluate, Labeled, MetricsReport};
use crate::network::{cross_entropy_grad, AttendCache, AttentionHead, EncodeCache, Encoder, HeadOutput, Pass};
use crate::train::{run_epoch, Schedule, Trainable};

pub const ASPECT_CLASSES: usize = 3;

/// An aspect sample mapped to ids, with precomputed target distances.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedAspect {
    pub ids: Vec<usize>,
    /// 1-based inclusive target span.
    pub target_lo: usize,
    pub target_hi: usize,
    pub distances: Vec<usize>,
    pub label: usize,
}

impl EncodedAspect {
    pub fn new(sample: &AspectSample, vocab: &Vocabulary) -> Result<Self> {
        Self::from_ids(vocab.encode(&sample.tokens), sample.target_lo, sample.target_hi, sample.label.index())
    }

    pub fn from_ids(ids: Vec<usize>, target_lo: usize, target_hi: usize, label: usize) -> Result<Self> {
        let distances = relative_distances(ids.len(), target_lo, target_hi)?;
        if label >= ASPECT_CLASSES {
            return Err(AtnError::arg(format!("label {label} is not an aspect class")));
        }
        Ok(EncodedAspect {
            ids,
            target_lo,
            target_hi,
            distances,
            label,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

impl Labeled for EncodedAspect {
    fn gold(&self) -> usize {
        self.label
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AscConfig {
    pub d_e: usize,
    /// Hidden size per LSTM direction.
    pub d_h: usize,
    /// Position embedding width; 0 disables the position channel.
    pub d_p: usize,
    /// Rows of the position table; larger distances are clamped.
    pub max_position: usize,
}

#[derive(Debug, Clone)]
pub struct AscOutput {
    pub probs: Vec<f64>,
    /// The student's own attention.
    pub beta: AttentionRecord,
    /// The weights actually used to pool the sentence (β, or γ′ under fusion).
    pub attention: AttentionRecord,
    pub sentence_repr: Vec<f64>,
    pub target_repr: Vec<f64>,
}

/// Forward state up to and including the student attention.
pub struct StudentTrace {
    pub h: Tensor,
    encode: EncodeCache,
    attend: AttendCache,
}

impl StudentTrace {
    pub fn beta(&self) -> &[f64] {
        &self.attend.weights
    }

    pub fn target_repr(&self) -> &[f64] {
        &self.attend.query
    }
}

/// Gradient on the hidden states carried between the two backward stages.
pub struct PendingBackward {
    d_h: Tensor,
}

pub struct AscModel {
    config: AscConfig,
    embedding: Arc<EmbeddingMatrix>,
    store: ParamStore,
    encoder: Encoder,
    head: AttentionHead,
}

impl AscModel {
    pub fn new(config: AscConfig, embedding: Arc<EmbeddingMatrix>, rng: &mut RngState) -> Result<Self> {
        if !embedding.is_frozen() {
            return Err(AtnError::Contract("word embeddings must be frozen".into()));
        }
        let mut store = ParamStore::new();
        let encoder = Encoder::register(
            &mut store,
            "asc",
            config.d_e,
            config.d_h,
            Some((config.max_position, config.d_p)),
            rng,
        )?;
        let head = AttentionHead::register(&mut store, "asc", 2 * config.d_h, ASPECT_CLASSES, rng)?;
        Ok(AscModel {
            config,
            embedding,
            store,
            encoder,
            head,
        })
    }

    pub fn config(&self) -> AscConfig {
        self.config
    }

    pub fn embedding(&self) -> &Arc<EmbeddingMatrix> {
        &self.embedding
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn head(&self) -> AttentionHead {
        self.head
    }

    pub fn encoder(&self) -> Encoder {
        self.encoder
    }

    /// Encodes the sentence and computes β against the target representation.
    pub fn trace(&self, sample: &EncodedAspect, pass: &mut Pass<'_>) -> Result<StudentTrace> {
        let (h, encode) = self
            .encoder
            .forward(&self.store, &self.embedding, &sample.ids, Some(&sample.distances), pass)?;
        let attend = self.head.attend(&self.store, &h, sample.target_lo - 1, sample.target_hi - 1);
        Ok(StudentTrace { h, encode, attend })
    }

    /// Pools hidden states with `weights` and classifies.
    pub fn classify(&self, trace: &StudentTrace, weights: &[f64]) -> Result<HeadOutput> {
        self.head.classify(&self.store, &trace.h, weights)
    }

    /// First backward stage: through the classifier and pooling. Returns the
    /// gradient on the pooling weights.
    pub fn head_backward(
        &self,
        trace: &StudentTrace,
        weights: &[f64],
        out: &HeadOutput,
        d_probs: &[f64],
        grads: &mut GradBuffer,
    ) -> (PendingBackward, Vec<f64>) {
        let mut d_h = Tensor::zeros(trace.h.shape());
        let mut d_weights = vec![0.0; weights.len()];
        self.head
            .classify_backward(&self.store, &trace.h, weights, out, d_probs, &mut d_h, &mut d_weights, grads);
        (PendingBackward { d_h }, d_weights)
    }

    /// Second backward stage: from a gradient on β down to the position table.
    pub fn attention_backward(&self, trace: &StudentTrace, pending: PendingBackward, d_beta: &[f64], grads: &mut GradBuffer) {
        let mut d_h = pending.d_h;
        self.head
            .attend_backward(&self.store, &trace.h, &trace.attend, d_beta, &mut d_h, grads);
        self.encoder.backward(&self.store, &trace.encode, &d_h, grads);
    }

    /// Plain student forward pass.
    pub fn forward(&self, sample: &EncodedAspect, pass: &mut Pass<'_>) -> Result<AscOutput> {
        let trace = self.trace(sample, pass)?;
        let out = self.classify(&trace, trace.beta())?;
        let beta = AttentionRecord::new(trace.beta().to_vec(), AttentionKind::Beta);
        Ok(AscOutput {
            probs: out.probs,
            attention: beta.clone(),
            beta,
            sentence_repr: out.repr,
            target_repr: trace.target_repr().to_vec(),
        })
    }

    /// Base cross-entropy loss for one sample, with gradients.
    pub fn loss_and_grad(&self, sample: &EncodedAspect, pass: &mut Pass<'_>, grads: &mut GradBuffer) -> Result<f64> {
        let trace = self.trace(sample, pass)?;
        let out = self.classify(&trace, trace.beta())?;
        let loss = cross_entropy(&out.probs, sample.label);
        let d_probs = cross_entropy_grad(&out.probs, sample.label);
        let (pending, d_beta) = self.head_backward(&trace, trace.beta(), &out, &d_probs, grads);
        self.attention_backward(&trace, pending, &d_beta, grads);
        Ok(loss)
    }
}

impl Trainable for AscModel {
    fn store(&self) -> &ParamStore {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }
}

/// Mean of hidden-state rows over a 1-based inclusive span.
pub fn target_repr(h: &Tensor, target_lo: usize, target_hi: usize) -> Result<Vec<f64>> {
    if target_lo < 1 || target_lo > target_hi || target_hi > h.rows() {
        return Err(AtnError::arg("target span out of bounds"));
    }
    let count = (target_hi - target_lo + 1) as f64;
    let mut t = vec![0.0; h.cols()];
    for i in target_lo - 1..target_hi {
        for (acc, x) in t.iter_mut().zip(h.row(i)) {
            *acc += x;
        }
    }
    t.iter_mut().for_each(|v| *v /= count);
    Ok(t)
}

/// A training loss for the student plus the matching inference rule.
pub trait StudentObjective: Sync {
    fn name(&self) -> &'static str;

    fn loss_and_grad(
        &self,
        model: &AscModel,
        sample: &EncodedAspect,
        pass: &mut Pass<'_>,
        grads: &mut GradBuffer,
    ) -> Result<f64>;

    fn predict(&self, model: &AscModel, sample: &EncodedAspect) -> Result<AscOutput>;
}

/// Cross-entropy only.
pub struct BaseObjective;

impl StudentObjective for BaseObjective {
    fn name(&self) -> &'static str {
        "base"
    }

    fn loss_and_grad(&self, model: &AscModel, sample: &EncodedAspect, pass: &mut Pass<'_>, grads: &mut GradBuffer) -> Result<f64> {
        model.loss_and_grad(sample, pass, grads)
    }

    fn predict(&self, model: &AscModel, sample: &EncodedAspect) -> Result<AscOutput> {
        model.forward(sample, &mut Pass::Inference)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudentTrainConfig {
    pub schedule: Schedule,
    pub seed: u64,
    /// Stop once training-set accuracy (percent) reaches this value.
    pub stop_at_train_accuracy: Option<f64>,
}

impl Default for StudentTrainConfig {
    fn default() -> Self {
        StudentTrainConfig {
            schedule: Schedule {
                lr: 0.1,
                momentum: 0.9,
                dropout: 0.5,
                batch: 32,
                epochs: 30,
            },
            seed: 1,
            stop_at_train_accuracy: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub dev_accuracy: Option<f64>,
    pub dev_macro_f1: Option<f64>,
    pub train_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainLog {
    pub objective: String,
    pub epochs: Vec<EpochLog>,
    pub step_losses: Vec<f64>,
    pub best_epoch: Option<usize>,
}

/// Predicts with `objective` and scores against the gold labels.
pub fn evaluate_student(
    model: &AscModel,
    objective: &dyn StudentObjective,
    samples: &[EncodedAspect],
) -> Result<MetricsReport> {
    evaluate(samples, ASPECT_CLASSES, |s| Ok(objective.predict(model, s)?.probs))
}

/// Mini-batch SGD with momentum on `objective`. After each epoch the dev
/// set is scored; the parameters of the best-dev-accuracy epoch are kept.
pub fn train_student(
    model: &mut AscModel,
    objective: &dyn StudentObjective,
    train: &[EncodedAspect],
    dev: &[EncodedAspect],
    config: &StudentTrainConfig,
) -> Result<TrainLog> {
    if train.is_empty() {
        return Err(AtnError::arg("empty training set"));
    }
    config.schedule.validate()?;
    let mut rng = RngState::new(config.seed);
    let mut log = TrainLog {
        objective: objective.name().to_string(),
        ..Default::default()
    };
    let mut best: Option<(f64, Vec<Tensor>)> = None;
    let per_sample =
        |m: &AscModel, s: &EncodedAspect, pass: &mut Pass<'_>, g: &mut GradBuffer| objective.loss_and_grad(m, s, pass, g);

    for epoch in 1..=config.schedule.epochs {
        let steps = run_epoch(model, train, &config.schedule, &mut rng, epoch, &per_sample)?;
        let mean_loss = steps.iter().sum::<f64>() / steps.len() as f64;
        log.step_losses.extend(steps);

        let dev_report = if dev.is_empty() {
            None
        } else {
            Some(evaluate_student(model, objective, dev)?)
        };
        let train_accuracy = match config.stop_at_train_accuracy {
            Some(_) => Some(evaluate_student(model, objective, train)?.accuracy),
            None => None,
        };
        if let Some(r) = &dev_report {
            if best.as_ref().is_none_or(|(b, _)| r.accuracy > *b) {
                best = Some((r.accuracy, model.store.snapshot()));
                log.best_epoch = Some(epoch);
            }
        }
        log.epochs.push(EpochLog {
            epoch,
            mean_loss,
            dev_accuracy: dev_report.as_ref().map(|r| r.accuracy),
            dev_macro_f1: dev_report.as_ref().map(|r| r.macro_f1),
            train_accuracy,
        });
        if let (Some(target), Some(acc)) = (config.stop_at_train_accuracy, train_accuracy) {
            if acc >= target {
                break;
            }
        }
    }
    if let Some((_, snapshot)) = best {
        model.store.restore(&snapshot);
    }
    Ok(log)
}

/// Trains the student on cross-entropy alone.
pub fn train_base_asc(
    model: &mut AscModel,
    train: &[EncodedAspect],
    dev: &[EncodedAspect],
    config: &StudentTrainConfig,
) -> Result<TrainLog> {
    train_student(model, &BaseObjective, train, dev, config)
}
