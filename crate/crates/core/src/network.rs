//! Building blocks shared by the document and aspect models: the
//! embedding + BiLSTM encoder and the bilinear attention / softmax head.

use crate::corpus::EmbeddingMatrix;
use crate::error::{AtnError, Result};
use crate::kernels::ops::{
    bilinear_scores, bilinear_scores_backward, cross_entropy_backward, linear_backward, softmax_backward,
    weighted_sum_backward, BilinearGrads,
};
use crate::kernels::{
    dropout, embed_lookup, linear, softmax, weighted_sum, BiLstm, BiLstmCache, DropoutMask, GradBuffer, ParamId,
    ParamStore, RngState, Tensor,
};

/// Whether a forward pass is for training (dropout active) or inference.
pub enum Pass<'a> {
    Inference,
    Training { dropout: f64, rng: &'a mut RngState },
}

impl Pass<'_> {
    pub fn is_training(&self) -> bool {
        matches!(self, Pass::Training { .. })
    }
}

/// Trainable position embedding table, `max_index x dim`.
#[derive(Debug, Clone, Copy)]
pub struct PositionTable {
    pub id: ParamId,
    pub max_index: usize,
    pub dim: usize,
}

impl PositionTable {
    /// Distances at or beyond `max_index` share the last row.
    pub fn row_for(&self, distance: usize) -> usize {
        distance.min(self.max_index - 1)
    }
}

/// Word embeddings (optionally joined with position embeddings) fed to a BiLSTM.
#[derive(Debug, Clone, Copy)]
pub struct Encoder {
    pub bilstm: BiLstm,
    pub position: Option<PositionTable>,
    pub d_e: usize,
}

pub struct EncodeCache {
    x: Tensor,
    bilstm: BiLstmCache,
    _mask: Option<DropoutMask>,
    position_rows: Vec<usize>,
}

impl Encoder {
    pub fn register(
        store: &mut ParamStore,
        prefix: &str,
        d_e: usize,
        d_h: usize,
        position: Option<(usize, usize)>,
        rng: &mut RngState,
    ) -> Result<Self> {
        let position = match position {
            Some((max_index, dim)) if dim > 0 => {
                if max_index == 0 {
                    return Err(AtnError::arg("position table needs at least one row"));
                }
                Some(PositionTable {
                    id: store.add_uniform(&format!("{prefix}.position"), &[max_index, dim], rng)?,
                    max_index,
                    dim,
                })
            }
            _ => None,
        };
        let d_in = d_e + position.map_or(0, |p| p.dim);
        let bilstm = BiLstm::register(store, &format!("{prefix}.bilstm"), d_in, d_h, rng)?;
        Ok(Encoder { bilstm, position, d_e })
    }

    pub fn hidden_width(&self) -> usize {
        2 * self.bilstm.d_h
    }

    /// Builds `[dropout(w_i); p_i]` rows and runs the BiLSTM.
    pub fn forward(
        &self,
        store: &ParamStore,
        embedding: &EmbeddingMatrix,
        ids: &[usize],
        distances: Option<&[usize]>,
        pass: &mut Pass<'_>,
    ) -> Result<(Tensor, EncodeCache)> {
        if ids.is_empty() {
            return Err(AtnError::arg("cannot encode an empty token sequence"));
        }
        if embedding.dim() != self.d_e {
            return Err(AtnError::arg(format!(
                "embedding width {} does not match encoder width {}",
                embedding.dim(),
                self.d_e
            )));
        }
        let words = embed_lookup(embedding, ids)?;
        let (words, mask) = match pass {
            Pass::Inference => (words, None),
            Pass::Training { dropout: p, rng } => dropout(&words, *p, rng, true),
        };
        let n = ids.len();
        let (x, position_rows) = match self.position {
            None => (words, Vec::new()),
            Some(table) => {
                let distances = distances.ok_or_else(|| AtnError::arg("position channel needs distances"))?;
                if distances.len() != n {
                    return Err(AtnError::arg("one distance per token required"));
                }
                let rows: Vec<usize> = distances.iter().map(|d| table.row_for(*d)).collect();
                let pos = store.value(table.id);
                let mut x = Tensor::zeros(&[n, self.d_e + table.dim]);
                for (i, &r) in rows.iter().enumerate() {
                    let row = x.row_mut(i);
                    row[..self.d_e].copy_from_slice(words.row(i));
                    row[self.d_e..].copy_from_slice(pos.row(r));
                }
                (x, rows)
            }
        };
        let (h, bilstm) = self.bilstm.forward(store, &x);
        Ok((
            h,
            EncodeCache {
                x,
                bilstm,
                _mask: mask,
                position_rows,
            },
        ))
    }

    /// Backpropagates into the BiLSTM and the position table. The word
    /// embedding table is frozen and receives nothing.
    pub fn backward(&self, store: &ParamStore, cache: &EncodeCache, d_h: &Tensor, grads: &mut GradBuffer) {
        let mut d_x = Tensor::zeros(cache.x.shape());
        self.bilstm.backward(store, &cache.x, &cache.bilstm, d_h, grads, &mut d_x);
        if let Some(table) = self.position {
            let g = grads.get_mut(table.id);
            for (i, &r) in cache.position_rows.iter().enumerate() {
                for (slot, d) in g.row_mut(r).iter_mut().zip(&d_x.row(i)[self.d_e..]) {
                    *slot += d;
                }
            }
        }
    }
}

/// Bilinear attention against a mean-pooled query followed by a linear +
/// softmax classifier.
#[derive(Debug, Clone, Copy)]
pub struct AttentionHead {
    pub w_att: ParamId,
    pub b_att: ParamId,
    pub w_cls: ParamId,
    pub b_cls: ParamId,
    pub classes: usize,
}

/// Forward state of [`AttentionHead::attend`].
#[derive(Debug, Clone)]
pub struct AttendCache {
    pub query: Vec<f64>,
    wq: Vec<f64>,
    pub weights: Vec<f64>,
    lo: usize,
    hi: usize,
}

#[derive(Debug, Clone)]
pub struct HeadOutput {
    pub repr: Vec<f64>,
    pub probs: Vec<f64>,
}

impl AttentionHead {
    pub fn register(store: &mut ParamStore, prefix: &str, width: usize, classes: usize, rng: &mut RngState) -> Result<Self> {
        Ok(AttentionHead {
            w_att: store.add_uniform(&format!("{prefix}.attention.w"), &[width, width], rng)?,
            b_att: store.add_uniform(&format!("{prefix}.attention.b"), &[1], rng)?,
            w_cls: store.add_uniform(&format!("{prefix}.classifier.w"), &[classes, width], rng)?,
            b_cls: store.add_uniform(&format!("{prefix}.classifier.b"), &[classes], rng)?,
            classes,
        })
    }

    /// Attention weights `softmax_i(h_i . W . q + b)` where `q` is the mean of
    /// rows `lo..=hi` (0-based) of `h`.
    pub fn attend(&self, store: &ParamStore, h: &Tensor, lo: usize, hi: usize) -> AttendCache {
        let width = h.cols();
        let mut query = vec![0.0; width];
        let count = (hi - lo + 1) as f64;
        for i in lo..=hi {
            for (q, x) in query.iter_mut().zip(h.row(i)) {
                *q += x;
            }
        }
        query.iter_mut().for_each(|q| *q /= count);
        let b = store.value(self.b_att).data()[0];
        let (scores, wq) = bilinear_scores(h, store.value(self.w_att), &query, b);
        AttendCache {
            weights: softmax(&scores),
            query,
            wq,
            lo,
            hi,
        }
    }

    pub fn attend_backward(
        &self,
        store: &ParamStore,
        h: &Tensor,
        cache: &AttendCache,
        d_weights: &[f64],
        d_h: &mut Tensor,
        grads: &mut GradBuffer,
    ) {
        let d_scores = softmax_backward(&cache.weights, d_weights);
        let mut d_query = vec![0.0; cache.query.len()];
        let [g_w, g_b] = grads.disjoint_mut([self.w_att, self.b_att]);
        bilinear_scores_backward(
            h,
            store.value(self.w_att),
            &cache.query,
            &cache.wq,
            &d_scores,
            BilinearGrads {
                h: d_h,
                w: g_w,
                q: &mut d_query,
                b: &mut g_b.data_mut()[0],
            },
        );
        let count = (cache.hi - cache.lo + 1) as f64;
        for i in cache.lo..=cache.hi {
            for (g, dq) in d_h.row_mut(i).iter_mut().zip(&d_query) {
                *g += dq / count;
            }
        }
    }

    /// `softmax(W_cls sum_i a_i h_i + b_cls)`.
    pub fn classify(&self, store: &ParamStore, h: &Tensor, weights: &[f64]) -> Result<HeadOutput> {
        let repr = weighted_sum(h, weights)?;
        let logits = linear(store.value(self.w_cls), store.value(self.b_cls), &repr)?;
        Ok(HeadOutput {
            probs: softmax(&logits),
            repr,
        })
    }

    /// Backward of [`classify`](Self::classify) for a gradient on the
    /// output probabilities; accumulates into `d_h` and `d_weights`.
    #[allow(clippy::too_many_arguments)]
    pub fn classify_backward(
        &self,
        store: &ParamStore,
        h: &Tensor,
        weights: &[f64],
        out: &HeadOutput,
        d_probs: &[f64],
        d_h: &mut Tensor,
        d_weights: &mut [f64],
        grads: &mut GradBuffer,
    ) {
        let d_logits = softmax_backward(&out.probs, d_probs);
        let mut d_repr = vec![0.0; out.repr.len()];
        let [g_w, g_b] = grads.disjoint_mut([self.w_cls, self.b_cls]);
        linear_backward(store.value(self.w_cls), &out.repr, &d_logits, g_w, g_b, &mut d_repr);
        weighted_sum_backward(h, weights, &d_repr, d_h, d_weights);
    }
}

/// Gradient of the cross-entropy loss on the output probabilities.
pub fn cross_entropy_grad(probs: &[f64], gold: usize) -> Vec<f64> {
    cross_entropy_backward(probs, gold)
}
