//! Mini-batch SGD-with-momentum driver shared by teacher and student training.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{AtnError, Result};
use crate::kernels::{sgd_momentum_step, GradBuffer, ParamStore, RngState};
use crate::network::Pass;

/// Optimization settings for one training run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub lr: f64,
    pub momentum: f64,
    pub dropout: f64,
    pub batch: usize,
    pub epochs: usize,
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 {
            return Err(AtnError::Config("batch size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(AtnError::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.lr.is_nan() || self.lr <= 0.0 || !(0.0..1.0).contains(&self.momentum) {
            return Err(AtnError::Config("lr must be positive and momentum in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Anything owning a single [`ParamStore`] that the optimizer updates.
pub trait Trainable: Sync {
    fn store(&self) -> &ParamStore;
    fn store_mut(&mut self) -> &mut ParamStore;
}

/// Samples per gradient buffer. Fixed so that reduction order (and hence
/// every bit of the result) does not depend on the thread count.
const CHUNK: usize = 8;

/// Per-sample losses and the summed gradient over `items`.
///
/// Each sample gets its own RNG stream seeded from `seeds`.
pub(crate) fn batch_gradients<M, T, F>(
    model: &M,
    items: &[&T],
    seeds: &[u64],
    dropout: f64,
    per_sample: &F,
) -> Result<(Vec<f64>, GradBuffer)>
where
    M: Trainable,
    T: Sync,
    F: Fn(&M, &T, &mut Pass<'_>, &mut GradBuffer) -> Result<f64> + Sync,
{
    let parts = items
        .par_chunks(CHUNK)
        .zip(seeds.par_chunks(CHUNK))
        .map(|(chunk, chunk_seeds)| {
            let mut grads = model.store().grad_buffer();
            let mut losses = Vec::with_capacity(chunk.len());
            for (item, seed) in chunk.iter().zip(chunk_seeds) {
                let mut rng = RngState::new(*seed);
                let mut pass = Pass::Training { dropout, rng: &mut rng };
                losses.push(per_sample(model, item, &mut pass, &mut grads)?);
            }
            Ok((losses, grads))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut iter = parts.into_iter();
    let (mut losses, mut total) = iter.next().expect("at least one sample per batch");
    for (l, g) in iter {
        losses.extend(l);
        total.add(&g);
    }
    Ok((losses, total))
}

/// One pass over `samples` in a freshly shuffled order. Returns the mean
/// loss of every optimizer step.
pub(crate) fn run_epoch<M, T, F>(
    model: &mut M,
    samples: &[T],
    schedule: &Schedule,
    rng: &mut RngState,
    epoch: usize,
    per_sample: &F,
) -> Result<Vec<f64>>
where
    M: Trainable,
    T: Sync,
    F: Fn(&M, &T, &mut Pass<'_>, &mut GradBuffer) -> Result<f64> + Sync,
{
    let mut order: Vec<usize> = (0..samples.len()).collect();
    rng.shuffle(&mut order);
    let mut step_losses = Vec::new();
    for (step, batch) in order.chunks(schedule.batch).enumerate() {
        let items: Vec<&T> = batch.iter().map(|i| &samples[*i]).collect();
        let seeds: Vec<u64> = batch.iter().map(|_| rng.next_u64()).collect();
        let (losses, grads) = batch_gradients(&*model, &items, &seeds, schedule.dropout, per_sample)?;
        let mean = losses.iter().sum::<f64>() / losses.len() as f64;
        if !mean.is_finite() {
            return Err(AtnError::Divergence { epoch, step, loss: mean });
        }
        let store = model.store_mut();
        store.accumulate(&grads, 1.0 / items.len() as f64);
        sgd_momentum_step(store, schedule.lr, schedule.momentum);
        step_losses.push(mean);
    }
    Ok(step_losses)
}

/// Splits `0..n` into (train, held-out) index lists; `fraction` of the
/// items, rounded, are held out.
pub fn holdout_split(n: usize, fraction: f64, rng: &mut RngState) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut idx);
    let held = ((fraction * n as f64).round() as usize).min(n);
    let mut dev = idx.split_off(n - held);
    idx.sort_unstable();
    dev.sort_unstable();
    (idx, dev)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn holdout_sizes() {
        let mut rng = RngState::new(1);
        let (train, dev) = holdout_split(10, 0.2, &mut rng);
        assert_eq!((train.len(), dev.len()), (8, 2));
        let mut all: Vec<usize> = train.iter().chain(&dev).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn schedule_validation() {
        let ok = Schedule {
            lr: 0.1,
            momentum: 0.9,
            dropout: 0.5,
            batch: 4,
            epochs: 1,
        };
        assert!(ok.validate().is_ok());
        assert!(Schedule { batch: 0, ..ok }.validate().is_err());
        assert!(Schedule { dropout: 1.0, ..ok }.validate().is_err());
    }
}
