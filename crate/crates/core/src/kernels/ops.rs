//! Forward and reverse-mode rules for the primitives used by both models.
//!
//! Every `*_backward` function *accumulates* into its gradient outputs so
//! that callers can sum contributions from several uses of one value.

use crate::corpus::EmbeddingMatrix;
use crate::error::{AtnError, Result};
use crate::kernels::rng::RngState;
use crate::kernels::tensor::{dot, matvec_acc, matvec_t_acc, outer_acc, Tensor};

/// Floor applied to probabilities before taking a logarithm.
pub const LOG_FLOOR: f64 = 1e-12;

/// Gathers embedding rows for `ids` into an `ids.len() x d_e` tensor.
pub fn embed_lookup(embedding: &EmbeddingMatrix, ids: &[usize]) -> Result<Tensor> {
    let table = embedding.values();
    let (rows, dim) = (table.rows(), table.cols());
    let mut out = Vec::with_capacity(ids.len() * dim);
    for &id in ids {
        if id >= rows {
            return Err(AtnError::arg(format!("token id {id} outside vocabulary of {rows}")));
        }
        out.extend_from_slice(table.row(id));
    }
    Tensor::from_vec(&[ids.len(), dim], out)
}

/// Scatters `grad_out` rows back into `grad_table`. Frozen tables receive nothing.
pub fn embed_lookup_backward(
    embedding: &EmbeddingMatrix,
    ids: &[usize],
    grad_out: &Tensor,
    grad_table: &mut Tensor,
) {
    if embedding.is_frozen() {
        return;
    }
    for (i, &id) in ids.iter().enumerate() {
        for (g, d) in grad_table.row_mut(id).iter_mut().zip(grad_out.row(i)) {
            *g += d;
        }
    }
}

/// `h . W . q + b` for a single pair of vectors.
pub fn bilinear_score(h: &[f64], w: &Tensor, q: &[f64], b: f64) -> Result<f64> {
    if w.shape().len() != 2 || w.shape()[0] != h.len() || w.shape()[1] != q.len() {
        return Err(AtnError::arg(format!(
            "bilinear form needs W of shape [{}, {}], got {:?}",
            h.len(),
            q.len(),
            w.shape()
        )));
    }
    let mut wq = vec![0.0; h.len()];
    matvec_acc(w.data(), h.len(), q.len(), q, 1.0, &mut wq);
    Ok(dot(h, &wq) + b)
}

/// Scores `h_i . W . q + b` for every row of `h`, plus the cached `W q`.
pub fn bilinear_scores(h: &Tensor, w: &Tensor, q: &[f64], b: f64) -> (Vec<f64>, Vec<f64>) {
    let d = h.cols();
    let mut wq = vec![0.0; d];
    matvec_acc(w.data(), d, q.len(), q, 1.0, &mut wq);
    let scores = (0..h.rows()).map(|i| dot(h.row(i), &wq) + b).collect();
    (scores, wq)
}

/// Gradient destinations for [`bilinear_scores_backward`].
pub struct BilinearGrads<'a> {
    pub h: &'a mut Tensor,
    pub w: &'a mut Tensor,
    pub q: &'a mut [f64],
    pub b: &'a mut f64,
}

/// Adds the gradients of [`bilinear_scores`] for upstream `d_scores`.
pub fn bilinear_scores_backward(
    h: &Tensor,
    w: &Tensor,
    q: &[f64],
    wq: &[f64],
    d_scores: &[f64],
    grads: BilinearGrads<'_>,
) {
    let d = h.cols();
    // Sum_i ds_i h_i, reused for both dW and dq.
    let mut weighted_h = vec![0.0; d];
    for (i, &ds) in d_scores.iter().enumerate() {
        *grads.b += ds;
        if ds == 0.0 {
            continue;
        }
        for (gh, wqv) in grads.h.row_mut(i).iter_mut().zip(wq) {
            *gh += ds * wqv;
        }
        for (acc, x) in weighted_h.iter_mut().zip(h.row(i)) {
            *acc += ds * x;
        }
    }
    outer_acc(grads.w.data_mut(), &weighted_h, q, 1.0);
    matvec_t_acc(w.data(), d, q.len(), &weighted_h, 1.0, grads.q);
}

/// Numerically stable softmax (max subtraction).
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Pulls a gradient on softmax outputs back to the scores.
pub fn softmax_backward(probs: &[f64], d_probs: &[f64]) -> Vec<f64> {
    let inner = dot(probs, d_probs);
    probs
        .iter()
        .zip(d_probs)
        .map(|(p, dp)| p * (dp - inner))
        .collect()
}

/// `sum_i w_i H_i`.
pub fn weighted_sum(h: &Tensor, w: &[f64]) -> Result<Vec<f64>> {
    if w.len() != h.rows() {
        return Err(AtnError::arg(format!(
            "{} weights for {} rows",
            w.len(),
            h.rows()
        )));
    }
    let mut out = vec![0.0; h.cols()];
    for (i, &wi) in w.iter().enumerate() {
        for (o, x) in out.iter_mut().zip(h.row(i)) {
            *o += wi * x;
        }
    }
    Ok(out)
}

/// Adds the gradients of `sum_i w_i h_i` into `d_h` and `d_w`.
pub fn weighted_sum_backward(
    h: &Tensor,
    w: &[f64],
    d_out: &[f64],
    d_h: &mut Tensor,
    d_w: &mut [f64],
) {
    for (i, &wi) in w.iter().enumerate() {
        d_w[i] += dot(h.row(i), d_out);
        for (g, d) in d_h.row_mut(i).iter_mut().zip(d_out) {
            *g += wi * d;
        }
    }
}

/// `W x + b` with `W` of shape `out x in`.
pub fn linear(w: &Tensor, b: &Tensor, x: &[f64]) -> Result<Vec<f64>> {
    if w.shape().len() != 2 || w.shape()[1] != x.len() || b.len() != w.shape()[0] {
        return Err(AtnError::arg(format!(
            "linear layer W{:?}, b{:?} cannot take input of length {}",
            w.shape(),
            b.shape(),
            x.len()
        )));
    }
    let mut out = b.data().to_vec();
    matvec_acc(w.data(), w.shape()[0], x.len(), x, 1.0, &mut out);
    Ok(out)
}

/// Adds the gradients of `W x + b` into `d_w`, `d_b` and `d_x`.
pub fn linear_backward(
    w: &Tensor,
    x: &[f64],
    d_out: &[f64],
    d_w: &mut Tensor,
    d_b: &mut Tensor,
    d_x: &mut [f64],
) {
    outer_acc(d_w.data_mut(), d_out, x, 1.0);
    d_b.add_scaled(&Tensor::vector(d_out.to_vec()), 1.0);
    matvec_t_acc(w.data(), d_out.len(), x.len(), d_out, 1.0, d_x);
}

/// Linear map followed by softmax.
pub fn classify(r: &[f64], w: &Tensor, b: &Tensor) -> Result<Vec<f64>> {
    Ok(softmax(&linear(w, b, r)?))
}

/// `-ln p[gold]` with the probability floored at [`LOG_FLOOR`].
pub fn cross_entropy(pred: &[f64], gold: usize) -> f64 {
    -pred[gold].max(LOG_FLOOR).ln()
}

/// Gradient of [`cross_entropy`] with respect to `pred`.
pub fn cross_entropy_backward(pred: &[f64], gold: usize) -> Vec<f64> {
    let mut d = vec![0.0; pred.len()];
    if pred[gold] > LOG_FLOOR {
        d[gold] = -1.0 / pred[gold];
    }
    d
}

/// Cross-entropy of `beta` under the constant target `delta`: `sum -delta_i ln beta_i`.
pub fn guidance_loss(delta: &[f64], beta: &[f64]) -> Result<f64> {
    if delta.len() != beta.len() {
        return Err(AtnError::arg(format!(
            "guidance target has {} entries, attention has {}",
            delta.len(),
            beta.len()
        )));
    }
    Ok(delta
        .iter()
        .zip(beta)
        .map(|(d, b)| -d * b.max(LOG_FLOOR).ln())
        .sum())
}

/// Gradient of [`guidance_loss`] with respect to `beta` only.
pub fn guidance_loss_backward(delta: &[f64], beta: &[f64], scale: f64, d_beta: &mut [f64]) {
    for ((g, d), b) in d_beta.iter_mut().zip(delta).zip(beta) {
        if *b > LOG_FLOOR {
            *g += scale * (-d / b);
        }
    }
}

pub fn entropy(p: &[f64]) -> f64 {
    p.iter()
        .filter(|x| **x > 0.0)
        .map(|x| -x * x.ln())
        .sum()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Inverted-dropout mask: entries are `0` or `1/(1-p)`.
#[derive(Debug, Clone)]
pub struct DropoutMask {
    scale: Vec<f64>,
}

impl DropoutMask {
    pub fn apply(&self, x: &mut Tensor) {
        for (v, s) in x.data_mut().iter_mut().zip(&self.scale) {
            *v *= s;
        }
    }

    pub fn survivors(&self) -> usize {
        self.scale.iter().filter(|s| **s != 0.0).count()
    }
}

/// Inverted dropout. Identity (and no mask, no RNG draws) at inference or
/// when `p == 0`.
pub fn dropout(x: &Tensor, p: f64, rng: &mut RngState, training: bool) -> (Tensor, Option<DropoutMask>) {
    assert!((0.0..1.0).contains(&p), "dropout rate must lie in [0, 1)");
    if !training || p == 0.0 {
        return (x.clone(), None);
    }
    let keep = 1.0 / (1.0 - p);
    let scale: Vec<f64> = (0..x.len())
        .map(|_| if rng.unit() < p { 0.0 } else { keep })
        .collect();
    let mask = DropoutMask { scale };
    let mut out = x.clone();
    mask.apply(&mut out);
    (out, Some(mask))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_two_scores() {
        let p = softmax(&[0.4, 0.6]);
        assert!((p[0] - 0.45017).abs() < 1e-4);
        assert!((p[1] - 0.54983).abs() < 1e-4);
    }

    #[test]
    fn softmax_shift_invariant() {
        let a = softmax(&[0.1, -2.0, 3.0]);
        let b = softmax(&[100.1, 98.0, 103.0]);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_equal_scores_uniform() {
        assert_eq!(softmax(&[3.0; 4]), vec![0.25; 4]);
    }

    #[test]
    fn bilinear_identity() {
        let w = Tensor::from_vec(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(bilinear_score(&[1.0, 0.0], &w, &[1.0, 0.0], 0.0).unwrap(), 1.0);
        let zero = Tensor::zeros(&[2, 3]);
        assert_eq!(bilinear_score(&[0.3, 2.0], &zero, &[1.0, -1.0, 5.0], 0.7).unwrap(), 0.7);
        assert!(bilinear_score(&[1.0], &w, &[1.0, 0.0], 0.0).is_err());
    }

    #[test]
    fn weighted_sum_selects_and_averages() {
        let h = Tensor::from_vec(&[3, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(weighted_sum(&h, &[0.0, 1.0, 0.0]).unwrap(), vec![3.0, 4.0]);
        let mean = weighted_sum(&h, &[1.0 / 3.0; 3]).unwrap();
        assert!((mean[0] - 3.0).abs() < 1e-12 && (mean[1] - 4.0).abs() < 1e-12);
        assert!(weighted_sum(&h, &[0.5, 0.5]).is_err());
    }

    #[test]
    fn classify_zero_weights_uniform() {
        let p = classify(&[0.4, -1.0], &Tensor::zeros(&[3, 2]), &Tensor::zeros(&[3])).unwrap();
        for x in p {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
        let biased = classify(&[0.4, -1.0], &Tensor::zeros(&[3, 2]), &Tensor::vector(vec![10.0, 0.0, 0.0])).unwrap();
        assert!(biased[0] > biased[1] && biased[0] > biased[2]);
        assert!(classify(&[1.0], &Tensor::zeros(&[3, 2]), &Tensor::zeros(&[3])).is_err());
    }

    #[test]
    fn cross_entropy_values() {
        assert_eq!(cross_entropy(&[1.0, 0.0, 0.0], 0), 0.0);
        let u = [1.0 / 3.0; 3];
        assert!((cross_entropy(&u, 2) - 3f64.ln()).abs() < 1e-12);
        // Clamped rather than infinite.
        assert!((cross_entropy(&[1.0, 0.0], 1) - (-LOG_FLOOR.ln())).abs() < 1e-9);
    }

    #[test]
    fn guidance_loss_values() {
        let u = [0.25; 4];
        assert!((guidance_loss(&u, &u).unwrap() - 4f64.ln()).abs() < 1e-12);
        let l = guidance_loss(&[0.5, 0.5], &[0.9, 0.1]).unwrap();
        assert!((l - 1.20397).abs() < 1e-5);
        assert!(guidance_loss(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn dropout_identity_cases() {
        let mut rng = RngState::new(0);
        let x = Tensor::vector(vec![1.0, 2.0, 3.0]);
        assert_eq!(dropout(&x, 0.0, &mut rng, true).0, x);
        assert_eq!(dropout(&x, 0.5, &mut rng, false).0, x);
    }

    #[test]
    fn dropout_survivor_fraction() {
        let mut rng = RngState::new(9);
        let x = Tensor::vector(vec![1.0; 10_000]);
        let (y, mask) = dropout(&x, 0.5, &mut rng, true);
        let frac = mask.unwrap().survivors() as f64 / 10_000.0;
        assert!((frac - 0.5).abs() <= 0.02, "survivor fraction {frac}");
        assert!(y.data().iter().all(|v| *v == 0.0 || *v == 2.0));
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(-800.0) < 1e-300);
        assert_eq!(sigmoid(800.0), 1.0);
    }
}
