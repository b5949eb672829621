//! Small fixtures shared by the integration tests.
#![allow(dead_code)]

pub mod grad;

use std::sync::Arc;

use atn_core::asc::{AscConfig, AscModel, EncodedAspect, ASPECT_CLASSES};
use atn_core::corpus::EmbeddingMatrix;
use atn_core::dsc::{DscConfig, DscModel, EncodedDoc};
use atn_core::kernels::{GradBuffer, GradCheckReport, ParamStore, RngState, Tensor};
use atn_core::kernels::relative_error;
use atn_core::train::Trainable;

pub const VOCAB: usize = 12;
pub const D_E: usize = 4;

pub fn embedding(seed: u64) -> Arc<EmbeddingMatrix> {
    let mut rng = RngState::new(seed);
    let values = Tensor::uniform(&[VOCAB, D_E], 1.0, &mut rng);
    Arc::new(EmbeddingMatrix::new(values, true).unwrap())
}

pub fn asc_model(seed: u64, d_h: usize, d_p: usize) -> AscModel {
    let config = AscConfig {
        d_e: D_E,
        d_h,
        d_p,
        max_position: 4,
    };
    AscModel::new(config, embedding(seed), &mut RngState::new(seed + 100)).unwrap()
}

pub fn dsc_model(seed: u64, d_h: usize) -> DscModel {
    let config = DscConfig { d_e: D_E, d_h };
    DscModel::new(config, embedding(seed), &mut RngState::new(seed + 200)).unwrap()
}

/// Multiplies every trainable parameter by `factor`, pushing activations
/// away from the near-linear regime of the default init.
pub fn scale_params(store: &mut ParamStore, factor: f64) {
    let ids: Vec<_> = store.ids().filter(|id| store.is_trainable(*id)).collect();
    for id in ids {
        store.value_mut(id).data_mut().iter_mut().for_each(|v| *v *= factor);
    }
}

pub fn random_ids(n: usize, rng: &mut RngState) -> Vec<usize> {
    (0..n).map(|_| 2 + rng.below(VOCAB - 2)).collect()
}

pub fn random_aspect(n: usize, rng: &mut RngState) -> EncodedAspect {
    let lo = 1 + rng.below(n);
    let hi = lo + rng.below(n - lo + 1);
    EncodedAspect::from_ids(random_ids(n, rng), lo, hi, rng.below(ASPECT_CLASSES)).unwrap()
}

pub fn random_doc(n: usize, rng: &mut RngState) -> EncodedDoc {
    EncodedDoc {
        ids: random_ids(n, rng),
        label: rng.below(2),
    }
}

/// Five-point central differences over every trainable parameter of
/// `model`, with `loss` re-evaluated through the model itself. The
/// fourth-order stencil keeps roundoff small on near-zero gradient entries.
pub fn check_model<M: Trainable>(model: &mut M, loss: impl Fn(&M) -> f64, analytic: &GradBuffer, eps: f64) -> GradCheckReport {
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: String::new(),
        checked: 0,
    };
    let ids: Vec<_> = model.store().ids().filter(|id| model.store().is_trainable(*id)).collect();
    for id in ids {
        for i in 0..model.store().value(id).len() {
            let orig = model.store().value(id).data()[i];
            let mut at = |k: f64| {
                model.store_mut().value_mut(id).data_mut()[i] = orig + k * eps;
                loss(model)
            };
            let n = (-at(2.0) + 8.0 * at(1.0) - 8.0 * at(-1.0) + at(-2.0)) / (12.0 * eps);
            model.store_mut().value_mut(id).data_mut()[i] = orig;
            let a = analytic.get(id).data()[i];
            let err = relative_error(a, n);
            report.checked += 1;
            if err > report.max_rel_error || report.worst.is_empty() {
                report.max_rel_error = err;
                report.worst = format!("{}[{i}] (analytic {a:.6e}, numeric {n:.6e})", model.store().name(id));
            }
        }
    }
    report
}

/// A small synthetic task and a matching low-capacity run configuration.
pub fn synthetic_setup(seed: u64) -> (atn_core::harness::Prepared, atn_core::harness::RunConfig) {
    use atn_core::synthetic::{flatten, generate, SyntheticConfig};
    let syn = SyntheticConfig {
        seed,
        documents: 240,
        train_sentences: 24,
        dev_sentences: 6,
        test_sentences: 24,
        dim: 8,
        ..SyntheticConfig::default()
    };
    let corpus = generate(&syn).unwrap();
    let train = flatten(&[corpus.train.clone(), corpus.dev.clone()].concat()).unwrap();
    let test = flatten(&corpus.test).unwrap();
    let prepared =
        atn_core::harness::Prepared::from_parts(corpus.vocab, corpus.embedding, &train, &test, corpus.documents).unwrap();
    let config = atn_core::harness::RunConfig {
        d_e: 8,
        d_h: 4,
        d_p: 3,
        max_position: 20,
        batch: 8,
        epochs: 3,
        teacher_epochs: 2,
        teacher_batch: 16,
        seeds: vec![1, 2],
        min_count_doc: 1,
        ..atn_core::harness::RunConfig::default()
    };
    (prepared, config)
}
