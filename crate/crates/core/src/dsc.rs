//! Document-level teacher: attention-based BiLSTM over a whole review,
//! pretrained on labeled documents and then frozen.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::attention::{AttentionKind, AttentionRecord};
use crate::corpus::{DocSample, EmbeddingMatrix, Vocabulary};
use crate::error::{AtnError, Result};
use crate::kernels::{cross_entropy, GradBuffer, ParamStore, RngState, Tensor};
use crate::metrics::{evaluate, Labeled};
use crate::network::{cross_entropy_grad, AttendCache, AttentionHead, EncodeCache, Encoder, HeadOutput, Pass};
use crate::train::{holdout_split, run_epoch, Schedule, Trainable};

pub const DOC_CLASSES: usize = 2;

/// A document mapped to vocabulary ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedDoc {
    pub ids: Vec<usize>,
    pub label: usize,
}

impl EncodedDoc {
    pub fn new(doc: &DocSample, vocab: &Vocabulary) -> Self {
        EncodedDoc {
            ids: vocab.encode(&doc.tokens),
            label: doc.label.index(),
        }
    }
}

impl Labeled for EncodedDoc {
    fn gold(&self) -> usize {
        self.label
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DscConfig {
    pub d_e: usize,
    /// Hidden size per LSTM direction.
    pub d_h: usize,
}

#[derive(Debug, Clone)]
pub struct DscOutput {
    pub probs: Vec<f64>,
    pub alpha: AttentionRecord,
    pub doc_repr: Vec<f64>,
}

pub struct DscModel {
    config: DscConfig,
    embedding: Arc<EmbeddingMatrix>,
    store: ParamStore,
    encoder: Encoder,
    head: AttentionHead,
    frozen: bool,
    attention_calls: AtomicUsize,
}

struct DscTrace {
    h: Tensor,
    encode: EncodeCache,
    attend: AttendCache,
    out: HeadOutput,
}

impl DscModel {
    pub fn new(config: DscConfig, embedding: Arc<EmbeddingMatrix>, rng: &mut RngState) -> Result<Self> {
        if !embedding.is_frozen() {
            return Err(AtnError::Contract("word embeddings must be frozen".into()));
        }
        let mut store = ParamStore::new();
        let encoder = Encoder::register(&mut store, "dsc", config.d_e, config.d_h, None, rng)?;
        let head = AttentionHead::register(&mut store, "dsc", 2 * config.d_h, DOC_CLASSES, rng)?;
        Ok(DscModel {
            config,
            embedding,
            store,
            encoder,
            head,
            frozen: false,
            attention_calls: AtomicUsize::new(0),
        })
    }

    pub fn config(&self) -> DscConfig {
        self.config
    }

    pub fn embedding(&self) -> &Arc<EmbeddingMatrix> {
        &self.embedding
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    /// Direct parameter access, for loading checkpoints and tests. Fails once frozen.
    pub fn params_mut(&mut self) -> Result<&mut ParamStore> {
        if self.frozen {
            return Err(AtnError::Contract("teacher parameters are frozen".into()));
        }
        Ok(&mut self.store)
    }

    pub fn head(&self) -> AttentionHead {
        self.head
    }

    fn trace(&self, ids: &[usize], pass: &mut Pass<'_>) -> Result<DscTrace> {
        let (h, encode) = self.encoder.forward(&self.store, &self.embedding, ids, None, pass)?;
        let attend = self.head.attend(&self.store, &h, 0, ids.len() - 1);
        let out = self.head.classify(&self.store, &h, &attend.weights)?;
        Ok(DscTrace { h, encode, attend, out })
    }

    /// Inference forward pass (dropout off).
    pub fn forward(&self, ids: &[usize]) -> Result<DscOutput> {
        let t = self.trace(ids, &mut Pass::Inference)?;
        Ok(DscOutput {
            probs: t.out.probs,
            alpha: AttentionRecord::new(t.attend.weights, AttentionKind::Alpha),
            doc_repr: t.out.repr,
        })
    }

    /// Cross-entropy for one document; gradients are added into `grads`.
    pub fn loss_and_grad(&self, doc: &EncodedDoc, pass: &mut Pass<'_>, grads: &mut GradBuffer) -> Result<f64> {
        let t = self.trace(&doc.ids, pass)?;
        let loss = cross_entropy(&t.out.probs, doc.label);
        let mut d_h = Tensor::zeros(t.h.shape());
        let mut d_alpha = vec![0.0; doc.ids.len()];
        let d_probs = cross_entropy_grad(&t.out.probs, doc.label);
        self.head
            .classify_backward(&self.store, &t.h, &t.attend.weights, &t.out, &d_probs, &mut d_h, &mut d_alpha, grads);
        self.head.attend_backward(&self.store, &t.h, &t.attend, &d_alpha, &mut d_h, grads);
        self.encoder.backward(&self.store, &t.encode, &d_h, grads);
        Ok(loss)
    }

    /// Excludes every parameter from further updates. There is no unfreeze.
    pub fn freeze(&mut self) {
        self.store.freeze_all();
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// Target-agnostic attention over a sentence, for transfer to the student.
    pub fn teacher_attention(&self, ids: &[usize]) -> Result<AttentionRecord> {
        if !self.frozen {
            return Err(AtnError::Contract("teacher attention requires a frozen teacher".into()));
        }
        if ids.is_empty() {
            return Err(AtnError::arg("teacher attention over an empty sentence"));
        }
        self.attention_calls.fetch_add(1, Ordering::Relaxed);
        Ok(self.forward(ids)?.alpha)
    }

    /// How many times [`teacher_attention`](Self::teacher_attention) has run.
    pub fn attention_calls(&self) -> usize {
        self.attention_calls.load(Ordering::Relaxed)
    }
}

impl Trainable for DscModel {
    fn store(&self) -> &ParamStore {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PretrainConfig {
    pub schedule: Schedule,
    /// Fraction of the corpus held out for checkpoint selection.
    pub holdout: f64,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            schedule: Schedule {
                lr: 0.1,
                momentum: 0.9,
                dropout: 0.5,
                batch: 64,
                epochs: 5,
            },
            holdout: 0.1,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DscEpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub heldout_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PretrainLog {
    pub epochs: Vec<DscEpochLog>,
    pub step_losses: Vec<f64>,
    pub best_epoch: Option<usize>,
    pub heldout_size: usize,
}

/// Mini-batch SGD with momentum on document cross-entropy. The parameters
/// of the epoch with the best held-out accuracy are kept (the whole corpus
/// is used for selection when the held-out split is empty).
pub fn pretrain_dsc(model: &mut DscModel, corpus: &[EncodedDoc], config: &PretrainConfig) -> Result<PretrainLog> {
    if model.is_frozen() {
        return Err(AtnError::Contract("cannot train a frozen teacher".into()));
    }
    if corpus.is_empty() {
        return Err(AtnError::arg("empty document corpus"));
    }
    config.schedule.validate()?;
    let mut rng = RngState::new(config.seed);
    let (train_idx, held_idx) = holdout_split(corpus.len(), config.holdout, &mut rng);
    let train: Vec<EncodedDoc> = train_idx.iter().map(|i| corpus[*i].clone()).collect();
    let held: Vec<EncodedDoc> = held_idx.iter().map(|i| corpus[*i].clone()).collect();
    let selection = if held.is_empty() { &train } else { &held };

    let mut log = PretrainLog {
        heldout_size: held.len(),
        ..Default::default()
    };
    let mut best: Option<(f64, Vec<Tensor>)> = None;
    let per_sample = |m: &DscModel, d: &EncodedDoc, pass: &mut Pass<'_>, g: &mut GradBuffer| m.loss_and_grad(d, pass, g);
    for epoch in 1..=config.schedule.epochs {
        let steps = run_epoch(model, &train, &config.schedule, &mut rng, epoch, &per_sample)?;
        let mean_loss = steps.iter().sum::<f64>() / steps.len().max(1) as f64;
        log.step_losses.extend(steps);
        let acc = evaluate(selection, DOC_CLASSES, |d| Ok(model.forward(&d.ids)?.probs))?.accuracy;
        log.epochs.push(DscEpochLog {
            epoch,
            mean_loss,
            heldout_accuracy: acc,
        });
        if best.as_ref().is_none_or(|(b, _)| acc > *b) {
            best = Some((acc, model.store.snapshot()));
            log.best_epoch = Some(epoch);
        }
    }
    if let Some((_, snapshot)) = best {
        model.store.restore(&snapshot);
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{bilinear_score, softmax};

    fn model(vocab: usize, d_e: usize, d_h: usize, seed: u64) -> DscModel {
        let mut rng = RngState::new(seed);
        let emb = Arc::new(EmbeddingMatrix::random(vocab, d_e, &mut rng));
        DscModel::new(DscConfig { d_e, d_h }, emb, &mut rng).unwrap()
    }

    #[test]
    fn single_token_document() {
        let m = model(5, 4, 3, 1);
        let out = m.forward(&[3]).unwrap();
        assert_eq!(out.alpha.weights, vec![1.0]);
        assert!((out.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_attention_matrix_gives_uniform_alpha() {
        let mut m = model(6, 4, 3, 2);
        let w = m.head.w_att;
        m.params_mut().unwrap().value_mut(w).fill(0.0);
        let out = m.forward(&[2, 3, 4, 5]).unwrap();
        for a in out.alpha.weights {
            assert!((a - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn doc_repr_matches_scalar_recomputation() {
        let m = model(9, 5, 4, 3);
        let ids = [2, 7, 7, 4, 8];
        let out = m.forward(&ids).unwrap();
        let (h, _) = m.encoder.forward(&m.store, &m.embedding, &ids, None, &mut Pass::Inference).unwrap();
        let n = ids.len();
        let width = h.cols();
        let avg: Vec<f64> = (0..width).map(|j| (0..n).map(|i| h.row(i)[j]).sum::<f64>() / n as f64).collect();
        let w = m.store.value(m.head.w_att);
        let b = m.store.value(m.head.b_att).data()[0];
        let scores: Vec<f64> = (0..n).map(|i| bilinear_score(h.row(i), w, &avg, b).unwrap()).collect();
        let exps: Vec<f64> = scores.iter().map(|s| s.exp()).collect();
        let z: f64 = exps.iter().sum();
        for j in 0..width {
            let r: f64 = (0..n).map(|i| exps[i] / z * h.row(i)[j]).sum();
            assert!((r - out.doc_repr[j]).abs() < 1e-12);
        }
        assert_eq!(softmax(&scores).len(), n);
    }

    #[test]
    fn teacher_attention_requires_freeze() {
        let mut m = model(5, 4, 3, 4);
        assert!(matches!(m.teacher_attention(&[2, 3]), Err(AtnError::Contract(_))));
        m.freeze();
        assert_eq!(m.teacher_attention(&[2]).unwrap().weights, vec![1.0]);
        assert!(m.teacher_attention(&[]).is_err());
        assert_eq!(m.attention_calls(), 1);
        let a = m.teacher_attention(&[2, 3, 4]).unwrap();
        let b = m.teacher_attention(&[2, 3, 4]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn frozen_teacher_refuses_training() {
        let mut m = model(5, 4, 3, 5);
        m.freeze();
        let docs = [EncodedDoc { ids: vec![2], label: 0 }];
        assert!(matches!(
            pretrain_dsc(&mut m, &docs, &PretrainConfig::default()),
            Err(AtnError::Contract(_))
        ));
        assert!(m.params_mut().is_err());
    }

    #[test]
    fn zero_epochs_leave_parameters_alone() {
        let mut m = model(5, 4, 3, 6);
        let before = m.params().checksum();
        let docs = [EncodedDoc { ids: vec![2, 3], label: 0 }, EncodedDoc { ids: vec![4], label: 1 }];
        let mut cfg = PretrainConfig::default();
        cfg.schedule.epochs = 0;
        let log = pretrain_dsc(&mut m, &docs, &cfg).unwrap();
        assert!(log.epochs.is_empty());
        assert_eq!(before, m.params().checksum());
    }
}
