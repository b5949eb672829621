//! Attention transfer from the frozen document teacher to the aspect student.
//!
//! Guidance adds `lambda * sum -delta_i ln beta_i` to the student loss, where
//! `delta` is the teacher attention reweighted by distance to the target.
//! Fusion pools the student's hidden states with a gated mix of teacher and
//! student attention, at training and at test time.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::asc::{AscModel, AscOutput, EncodedAspect, StudentObjective, StudentTrainConfig, TrainLog};
use crate::attention::{AttentionKind, AttentionRecord};
use crate::dsc::DscModel;
use crate::error::{AtnError, Result};
use crate::kernels::ops::guidance_loss_backward;
use crate::kernels::{cross_entropy, guidance_loss, sigmoid, softmax, softmax_backward, GradBuffer, ParamId, RngState};
use crate::network::{cross_entropy_grad, Pass};

/// How a non-negative weight vector is turned back into a distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    /// `softmax(x)`, applied to the weights themselves.
    #[default]
    Softmax,
    /// `x / sum(x)`. Ablation only.
    Linear,
}

impl Normalization {
    pub fn apply(self, x: &[f64]) -> Vec<f64> {
        match self {
            Normalization::Softmax => softmax(x),
            Normalization::Linear => {
                let s: f64 = x.iter().sum();
                x.iter().map(|v| v / s).collect()
            }
        }
    }

    fn backward(self, x: &[f64], out: &[f64], d_out: &[f64]) -> Vec<f64> {
        match self {
            Normalization::Softmax => softmax_backward(out, d_out),
            Normalization::Linear => {
                let s: f64 = x.iter().sum();
                let dot: f64 = out.iter().zip(d_out).map(|(o, d)| o * d).sum();
                d_out.iter().map(|d| (d - dot) / s).collect()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuidanceConfig {
    pub lambda: f64,
    pub normalization: Normalization,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        GuidanceConfig {
            lambda: 0.4,
            normalization: Normalization::Softmax,
        }
    }
}

impl GuidanceConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(AtnError::Config(format!("lambda must be non-negative, got {}", self.lambda)));
        }
        Ok(())
    }
}

/// `delta = softmax(alpha_i / 2^(l_i - 1))`: tokens in the target are
/// doubled, and each step away from it halves the weight.
pub fn reweight_alpha(alpha: &AttentionRecord, distances: &[usize]) -> Result<AttentionRecord> {
    reweight_alpha_with(alpha, distances, Normalization::Softmax)
}

pub fn reweight_alpha_with(alpha: &AttentionRecord, distances: &[usize], norm: Normalization) -> Result<AttentionRecord> {
    if alpha.len() != distances.len() {
        return Err(AtnError::arg(format!(
            "{} attention weights but {} distances",
            alpha.len(),
            distances.len()
        )));
    }
    let scaled: Vec<f64> = alpha
        .weights
        .iter()
        .zip(distances)
        .map(|(a, &l)| a * 2f64.powi(1 - l.min(2000) as i32))
        .collect();
    Ok(AttentionRecord::new(norm.apply(&scaled), AttentionKind::Delta))
}

/// Base cross-entropy plus `lambda` times the guidance loss of the student
/// attention against `delta`.
pub fn guidance_step_loss(out: &AscOutput, delta: &AttentionRecord, gold: usize, lambda: f64) -> Result<f64> {
    let base = cross_entropy(&out.probs, gold);
    if lambda == 0.0 {
        return Ok(base);
    }
    Ok(base + lambda * guidance_loss(&delta.weights, &out.beta.weights)?)
}

/// Source of teacher attention.
#[derive(Clone, Copy)]
pub enum Teacher<'a> {
    Model(&'a DscModel),
    /// Equal weight on every token; stands in when no teacher data is available.
    Uniform,
}

impl Teacher<'_> {
    pub fn attention(&self, ids: &[usize]) -> Result<AttentionRecord> {
        match self {
            Teacher::Model(m) => m.teacher_attention(ids),
            Teacher::Uniform => {
                if ids.is_empty() {
                    return Err(AtnError::arg("teacher attention over an empty sentence"));
                }
                Ok(AttentionRecord::new(vec![1.0 / ids.len() as f64; ids.len()], AttentionKind::Alpha))
            }
        }
    }

    fn ensure_frozen(&self) -> Result<()> {
        match self {
            Teacher::Model(m) if !m.is_frozen() => Err(AtnError::Contract("the teacher must be frozen before transfer".into())),
            _ => Ok(()),
        }
    }
}

/// Teacher attention memoized per token sequence. The teacher is frozen,
/// so a sentence always gets the same weights.
struct AlphaCache<'a> {
    teacher: Teacher<'a>,
    cache: RwLock<HashMap<Vec<usize>, Arc<Vec<f64>>>>,
}

impl<'a> AlphaCache<'a> {
    fn new(teacher: Teacher<'a>) -> Self {
        AlphaCache {
            teacher,
            cache: RwLock::new(HashMap::new()),
        }
    }

    fn get(&self, ids: &[usize]) -> Result<Arc<Vec<f64>>> {
        if let Some(hit) = self.cache.read().expect("alpha cache poisoned").get(ids) {
            return Ok(Arc::clone(hit));
        }
        let alpha = Arc::new(self.teacher.attention(ids)?.weights);
        self.cache
            .write()
            .expect("alpha cache poisoned")
            .insert(ids.to_vec(), Arc::clone(&alpha));
        Ok(alpha)
    }
}

/// Student loss with attention guidance. Inference is the plain student.
pub struct GuidanceObjective<'a> {
    config: GuidanceConfig,
    alpha: AlphaCache<'a>,
}

impl<'a> GuidanceObjective<'a> {
    pub fn new(teacher: Teacher<'a>, config: GuidanceConfig) -> Result<Self> {
        config.validate()?;
        teacher.ensure_frozen()?;
        Ok(GuidanceObjective {
            config,
            alpha: AlphaCache::new(teacher),
        })
    }

    /// The guidance target for `sample`.
    pub fn delta(&self, sample: &EncodedAspect) -> Result<AttentionRecord> {
        let alpha = self.alpha.get(&sample.ids)?;
        let alpha = AttentionRecord::new(alpha.to_vec(), AttentionKind::Alpha);
        reweight_alpha_with(&alpha, &sample.distances, self.config.normalization)
    }
}

impl StudentObjective for GuidanceObjective<'_> {
    fn name(&self) -> &'static str {
        "atn-ag"
    }

    fn loss_and_grad(&self, model: &AscModel, sample: &EncodedAspect, pass: &mut Pass<'_>, grads: &mut GradBuffer) -> Result<f64> {
        if self.config.lambda == 0.0 {
            return model.loss_and_grad(sample, pass, grads);
        }
        let delta = self.delta(sample)?;
        let trace = model.trace(sample, pass)?;
        let beta = trace.beta();
        let out = model.classify(&trace, beta)?;
        let loss = cross_entropy(&out.probs, sample.label) + self.config.lambda * guidance_loss(&delta.weights, beta)?;
        let d_probs = cross_entropy_grad(&out.probs, sample.label);
        let (pending, mut d_beta) = model.head_backward(&trace, beta, &out, &d_probs, grads);
        guidance_loss_backward(&delta.weights, beta, self.config.lambda, &mut d_beta);
        model.attention_backward(&trace, pending, &d_beta, grads);
        Ok(loss)
    }

    fn predict(&self, model: &AscModel, sample: &EncodedAspect) -> Result<AscOutput> {
        model.forward(sample, &mut Pass::Inference)
    }
}

/// Trains the student with attention guidance from a frozen teacher.
pub fn atn_ag_train(
    model: &mut AscModel,
    teacher: Teacher<'_>,
    train: &[EncodedAspect],
    dev: &[EncodedAspect],
    guidance: GuidanceConfig,
    config: &StudentTrainConfig,
) -> Result<TrainLog> {
    let objective = GuidanceObjective::new(teacher, guidance)?;
    crate::asc::train_student(model, &objective, train, dev, config)
}

/// Gate weights `W_g` (length 2, no bias), stored with the student parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FusionGate {
    pub id: ParamId,
}

pub const FUSION_GATE_PARAM: &str = "fusion.w_g";

impl FusionGate {
    /// Registers the gate in the student's parameter store, or reuses it if
    /// already present (for example after loading a checkpoint).
    pub fn attach(model: &mut AscModel, rng: &mut RngState) -> Result<Self> {
        let store = model.params_mut();
        let id = match store.find(FUSION_GATE_PARAM) {
            Some(id) => id,
            None => store.add_uniform(FUSION_GATE_PARAM, &[2], rng)?,
        };
        Ok(FusionGate { id })
    }

    pub fn find(model: &AscModel) -> Option<Self> {
        model.params().find(FUSION_GATE_PARAM).map(|id| FusionGate { id })
    }

    pub fn weights(&self, model: &AscModel) -> [f64; 2] {
        let w = model.params().value(self.id).data();
        [w[0], w[1]]
    }
}

/// Result of [`fuse_attention`].
#[derive(Debug, Clone, PartialEq)]
pub struct Fused {
    /// Per-position gate values `g_i`.
    pub gate: Vec<f64>,
    /// Convex combination `g_i alpha_i + (1 - g_i) beta_i`, before normalization.
    pub gamma: Vec<f64>,
    /// Normalized `gamma'`.
    pub weights: Vec<f64>,
}

impl Fused {
    pub fn record(&self) -> AttentionRecord {
        AttentionRecord::new(self.weights.clone(), AttentionKind::Gamma)
    }
}

pub fn fuse_attention(alpha: &[f64], beta: &[f64], w_g: [f64; 2]) -> Result<Fused> {
    fuse_attention_with(alpha, beta, w_g, Normalization::Softmax)
}

pub fn fuse_attention_with(alpha: &[f64], beta: &[f64], w_g: [f64; 2], norm: Normalization) -> Result<Fused> {
    if alpha.len() != beta.len() {
        return Err(AtnError::arg(format!(
            "teacher attention has {} entries, student attention has {}",
            alpha.len(),
            beta.len()
        )));
    }
    let gate: Vec<f64> = alpha
        .iter()
        .zip(beta)
        .map(|(a, b)| sigmoid(w_g[0] * a + w_g[1] * b))
        .collect();
    let gamma: Vec<f64> = gate
        .iter()
        .zip(alpha.iter().zip(beta))
        .map(|(g, (a, b))| g * a + (1.0 - g) * b)
        .collect();
    Ok(Fused {
        weights: norm.apply(&gamma),
        gate,
        gamma,
    })
}

/// Backward of [`fuse_attention_with`]; `alpha` is constant. Adds into
/// `d_beta` and `d_w_g`.
#[allow(clippy::too_many_arguments)]
pub fn fuse_attention_backward(
    alpha: &[f64],
    beta: &[f64],
    w_g: [f64; 2],
    fused: &Fused,
    norm: Normalization,
    d_weights: &[f64],
    d_beta: &mut [f64],
    d_w_g: &mut [f64],
) {
    let d_gamma = norm.backward(&fused.gamma, &fused.weights, d_weights);
    for i in 0..alpha.len() {
        let g = fused.gate[i];
        d_beta[i] += d_gamma[i] * (1.0 - g);
        let d_z = d_gamma[i] * (alpha[i] - beta[i]) * g * (1.0 - g);
        d_w_g[0] += d_z * alpha[i];
        d_w_g[1] += d_z * beta[i];
        d_beta[i] += d_z * w_g[1];
    }
}

/// Student pooling with fused teacher/student attention. The teacher is
/// consulted at inference too.
pub struct FusionObjective<'a> {
    gate: FusionGate,
    normalization: Normalization,
    alpha: AlphaCache<'a>,
    teacher: Teacher<'a>,
}

impl<'a> FusionObjective<'a> {
    pub fn new(teacher: Teacher<'a>, gate: FusionGate, normalization: Normalization) -> Result<Self> {
        teacher.ensure_frozen()?;
        Ok(FusionObjective {
            gate,
            normalization,
            alpha: AlphaCache::new(teacher),
            teacher,
        })
    }

    fn output(&self, model: &AscModel, sample: &EncodedAspect, alpha: &[f64]) -> Result<AscOutput> {
        let trace = model.trace(sample, &mut Pass::Inference)?;
        let fused = fuse_attention_with(alpha, trace.beta(), self.gate.weights(model), self.normalization)?;
        let out = model.classify(&trace, &fused.weights)?;
        Ok(AscOutput {
            probs: out.probs,
            beta: AttentionRecord::new(trace.beta().to_vec(), AttentionKind::Beta),
            attention: fused.record(),
            sentence_repr: out.repr,
            target_repr: trace.target_repr().to_vec(),
        })
    }
}

impl StudentObjective for FusionObjective<'_> {
    fn name(&self) -> &'static str {
        "atn-af"
    }

    fn loss_and_grad(&self, model: &AscModel, sample: &EncodedAspect, pass: &mut Pass<'_>, grads: &mut GradBuffer) -> Result<f64> {
        let alpha = self.alpha.get(&sample.ids)?;
        let trace = model.trace(sample, pass)?;
        let w_g = self.gate.weights(model);
        let fused = fuse_attention_with(&alpha, trace.beta(), w_g, self.normalization)?;
        let out = model.classify(&trace, &fused.weights)?;
        let loss = cross_entropy(&out.probs, sample.label);
        let d_probs = cross_entropy_grad(&out.probs, sample.label);
        let (pending, d_weights) = model.head_backward(&trace, &fused.weights, &out, &d_probs, grads);
        let mut d_beta = vec![0.0; d_weights.len()];
        fuse_attention_backward(
            &alpha,
            trace.beta(),
            w_g,
            &fused,
            self.normalization,
            &d_weights,
            &mut d_beta,
            grads.get_mut(self.gate.id).data_mut(),
        );
        model.attention_backward(&trace, pending, &d_beta, grads);
        Ok(loss)
    }

    /// Computes teacher attention afresh on every call.
    fn predict(&self, model: &AscModel, sample: &EncodedAspect) -> Result<AscOutput> {
        let alpha = self.teacher.attention(&sample.ids)?;
        self.output(model, sample, &alpha.weights)
    }
}

/// Fused-attention forward pass: `gamma'` replaces `beta` when pooling.
pub fn atn_af_forward(model: &AscModel, teacher: Teacher<'_>, gate: FusionGate, sample: &EncodedAspect) -> Result<AscOutput> {
    FusionObjective::new(teacher, gate, Normalization::Softmax)?.predict(model, sample)
}

/// Trains student and gate jointly on fused attention. The gate is
/// registered in the student's store if absent.
pub fn atn_af_train(
    model: &mut AscModel,
    teacher: Teacher<'_>,
    train: &[EncodedAspect],
    dev: &[EncodedAspect],
    normalization: Normalization,
    config: &StudentTrainConfig,
) -> Result<(FusionGate, TrainLog)> {
    teacher.ensure_frozen()?;
    let mut rng = RngState::new(config.seed ^ 0x6761_7465);
    let gate = FusionGate::attach(model, &mut rng)?;
    let objective = FusionObjective::new(teacher, gate, normalization)?;
    let log = crate::asc::train_student(model, &objective, train, dev, config)?;
    Ok((gate, log))
}
