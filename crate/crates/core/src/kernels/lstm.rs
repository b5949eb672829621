//! LSTM and BiLSTM with hand-written backpropagation through time.
//!
//! Gate layout in every `4h`-row weight block is `[input, forget, cell, output]`.
//! Initial hidden and cell states are zero.

use crate::error::Result;
use crate::kernels::ops::sigmoid;
use crate::kernels::params::{GradBuffer, ParamId, ParamStore};
use crate::kernels::rng::RngState;
use crate::kernels::tensor::{gemm, matvec_acc, matvec_t_acc, Tensor, Trans};

/// Borrowed weights of one LSTM direction.
#[derive(Clone, Copy)]
pub struct LstmWeights<'a> {
    /// `4h x d_in`
    pub w_ih: &'a Tensor,
    /// `4h x h`
    pub w_hh: &'a Tensor,
    /// `4h`
    pub bias: &'a Tensor,
}

impl LstmWeights<'_> {
    pub fn hidden(&self) -> usize {
        self.w_hh.cols()
    }

    pub fn input(&self) -> usize {
        self.w_ih.cols()
    }
}

pub struct LstmGrads<'a> {
    pub w_ih: &'a mut Tensor,
    pub w_hh: &'a mut Tensor,
    pub bias: &'a mut Tensor,
}

/// Activations saved by [`lstm_forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct LstmCache {
    reverse: bool,
    /// Post-activation gates, `n x 4h`.
    gates: Vec<f64>,
    cells: Vec<f64>,
    tanh_cells: Vec<f64>,
    /// Per-step outputs indexed by sequence position, `n x h`.
    pub hidden: Tensor,
}

fn prev_step(t: usize, n: usize, reverse: bool) -> Option<usize> {
    if reverse {
        (t + 1 < n).then_some(t + 1)
    } else {
        t.checked_sub(1)
    }
}

fn step_order(n: usize, reverse: bool) -> Box<dyn DoubleEndedIterator<Item = usize>> {
    if reverse {
        Box::new((0..n).rev())
    } else {
        Box::new(0..n)
    }
}

/// Runs one direction over `x` (`n x d_in`). With `reverse`, step order is
/// `n-1, ..., 0` but outputs stay aligned to input positions.
pub fn lstm_forward(w: LstmWeights<'_>, x: &Tensor, reverse: bool) -> LstmCache {
    let n = x.rows();
    let h = w.hidden();
    let d_in = w.input();
    let g4 = 4 * h;

    let mut gates = vec![0.0; n * g4];
    gemm(n, d_in, g4, x.data(), Trans::No, w.w_ih.data(), Trans::Yes, 0.0, &mut gates);

    let mut cells = vec![0.0; n * h];
    let mut tanh_cells = vec![0.0; n * h];
    let mut hidden = vec![0.0; n * h];

    for t in step_order(n, reverse) {
        let prev = prev_step(t, n, reverse);
        let z = &mut gates[t * g4..(t + 1) * g4];
        for (zi, b) in z.iter_mut().zip(w.bias.data()) {
            *zi += b;
        }
        if let Some(p) = prev {
            matvec_acc(w.w_hh.data(), g4, h, &hidden[p * h..(p + 1) * h], 1.0, z);
        }
        for j in 0..h {
            let i_g = sigmoid(z[j]);
            let f_g = sigmoid(z[h + j]);
            let c_g = z[2 * h + j].tanh();
            let o_g = sigmoid(z[3 * h + j]);
            z[j] = i_g;
            z[h + j] = f_g;
            z[2 * h + j] = c_g;
            z[3 * h + j] = o_g;
            let c_prev = prev.map_or(0.0, |p| cells[p * h + j]);
            let c = f_g * c_prev + i_g * c_g;
            let tc = c.tanh();
            cells[t * h + j] = c;
            tanh_cells[t * h + j] = tc;
            hidden[t * h + j] = o_g * tc;
        }
    }

    LstmCache {
        reverse,
        gates,
        cells,
        tanh_cells,
        hidden: Tensor::from_vec(&[n, h], hidden).expect("hidden buffer sized n*h"),
    }
}

/// Backpropagates `d_hidden` (`n x h`) through one direction, accumulating
/// weight gradients into `grads` and input gradients into `d_x`.
pub fn lstm_backward(
    w: LstmWeights<'_>,
    x: &Tensor,
    cache: &LstmCache,
    d_hidden: &Tensor,
    grads: LstmGrads<'_>,
    d_x: &mut Tensor,
) {
    let n = x.rows();
    let h = w.hidden();
    let d_in = w.input();
    let g4 = 4 * h;
    let reverse = cache.reverse;
    let hidden = cache.hidden.data();

    let mut d_gates = vec![0.0; n * g4];
    let mut dh_next = vec![0.0; h];
    let mut dc_next = vec![0.0; h];

    for t in step_order(n, reverse).rev() {
        let prev = prev_step(t, n, reverse);
        let gate = &cache.gates[t * g4..(t + 1) * g4];
        let dz = &mut d_gates[t * g4..(t + 1) * g4];
        for j in 0..h {
            let (i_g, f_g, c_g, o_g) = (gate[j], gate[h + j], gate[2 * h + j], gate[3 * h + j]);
            let tc = cache.tanh_cells[t * h + j];
            let dh = d_hidden.data()[t * h + j] + dh_next[j];
            let d_o = dh * tc;
            let dc = dc_next[j] + dh * o_g * (1.0 - tc * tc);
            let c_prev = prev.map_or(0.0, |p| cache.cells[p * h + j]);
            dz[j] = dc * c_g * i_g * (1.0 - i_g);
            dz[h + j] = dc * c_prev * f_g * (1.0 - f_g);
            dz[2 * h + j] = dc * i_g * (1.0 - c_g * c_g);
            dz[3 * h + j] = d_o * o_g * (1.0 - o_g);
            dc_next[j] = dc * f_g;
        }
        dh_next.iter_mut().for_each(|v| *v = 0.0);
        if prev.is_some() {
            matvec_t_acc(w.w_hh.data(), g4, h, dz, 1.0, &mut dh_next);
        }
    }

    // Hidden state feeding each step (zero for the first one).
    let mut h_prev = vec![0.0; n * h];
    for t in 0..n {
        if let Some(p) = prev_step(t, n, reverse) {
            h_prev[t * h..(t + 1) * h].copy_from_slice(&hidden[p * h..(p + 1) * h]);
        }
    }
    gemm(g4, n, h, &d_gates, Trans::Yes, &h_prev, Trans::No, 1.0, grads.w_hh.data_mut());
    gemm(g4, n, d_in, &d_gates, Trans::Yes, x.data(), Trans::No, 1.0, grads.w_ih.data_mut());
    let db = grads.bias.data_mut();
    for t in 0..n {
        for (b, d) in db.iter_mut().zip(&d_gates[t * g4..(t + 1) * g4]) {
            *b += d;
        }
    }
    gemm(n, g4, d_in, &d_gates, Trans::No, w.w_ih.data(), Trans::No, 1.0, d_x.data_mut());
}

/// Parameter handles of one LSTM direction.
#[derive(Debug, Clone, Copy)]
pub struct LstmIds {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub bias: ParamId,
}

impl LstmIds {
    fn register(store: &mut ParamStore, prefix: &str, d_in: usize, d_h: usize, rng: &mut RngState) -> Result<Self> {
        Ok(LstmIds {
            w_ih: store.add_uniform(&format!("{prefix}.w_ih"), &[4 * d_h, d_in], rng)?,
            w_hh: store.add_uniform(&format!("{prefix}.w_hh"), &[4 * d_h, d_h], rng)?,
            bias: store.add_uniform(&format!("{prefix}.bias"), &[4 * d_h], rng)?,
        })
    }

    fn weights<'a>(&self, store: &'a ParamStore) -> LstmWeights<'a> {
        LstmWeights {
            w_ih: store.value(self.w_ih),
            w_hh: store.value(self.w_hh),
            bias: store.value(self.bias),
        }
    }
}

/// Bidirectional LSTM whose parameters live in a [`ParamStore`].
#[derive(Debug, Clone, Copy)]
pub struct BiLstm {
    pub forward: LstmIds,
    pub backward: LstmIds,
    pub d_in: usize,
    pub d_h: usize,
}

#[derive(Debug, Clone)]
pub struct BiLstmCache {
    fwd: LstmCache,
    bwd: LstmCache,
}

impl BiLstm {
    pub fn register(store: &mut ParamStore, prefix: &str, d_in: usize, d_h: usize, rng: &mut RngState) -> Result<Self> {
        Ok(BiLstm {
            forward: LstmIds::register(store, &format!("{prefix}.fwd"), d_in, d_h, rng)?,
            backward: LstmIds::register(store, &format!("{prefix}.bwd"), d_in, d_h, rng)?,
            d_in,
            d_h,
        })
    }

    /// `n x d_in` inputs to `n x 2d_h` outputs, row `i` = `[fwd_i; bwd_i]`.
    pub fn forward(&self, store: &ParamStore, x: &Tensor) -> (Tensor, BiLstmCache) {
        bilstm_forward(self.forward.weights(store), self.backward.weights(store), x)
    }

    pub fn backward(
        &self,
        store: &ParamStore,
        x: &Tensor,
        cache: &BiLstmCache,
        d_out: &Tensor,
        grads: &mut GradBuffer,
        d_x: &mut Tensor,
    ) {
        let (d_fwd, d_bwd) = split_halves(d_out, self.d_h);
        for (ids, c, d) in [(self.forward, &cache.fwd, &d_fwd), (self.backward, &cache.bwd, &d_bwd)] {
            let [w_ih, w_hh, bias] = grads.disjoint_mut([ids.w_ih, ids.w_hh, ids.bias]);
            lstm_backward(ids.weights(store), x, c, d, LstmGrads { w_ih, w_hh, bias }, d_x);
        }
    }
}

/// Runs both directions and concatenates per-position outputs.
pub fn bilstm_forward(fwd: LstmWeights<'_>, bwd: LstmWeights<'_>, x: &Tensor) -> (Tensor, BiLstmCache) {
    let f = lstm_forward(fwd, x, false);
    let b = lstm_forward(bwd, x, true);
    let n = x.rows();
    let (hf, hb) = (fwd.hidden(), bwd.hidden());
    let mut out = Tensor::zeros(&[n, hf + hb]);
    for i in 0..n {
        let row = out.row_mut(i);
        row[..hf].copy_from_slice(f.hidden.row(i));
        row[hf..].copy_from_slice(b.hidden.row(i));
    }
    (out, BiLstmCache { fwd: f, bwd: b })
}

fn split_halves(t: &Tensor, half: usize) -> (Tensor, Tensor) {
    let n = t.rows();
    let mut a = Tensor::zeros(&[n, half]);
    let mut b = Tensor::zeros(&[n, half]);
    for i in 0..n {
        a.row_mut(i).copy_from_slice(&t.row(i)[..half]);
        b.row_mut(i).copy_from_slice(&t.row(i)[half..]);
    }
    (a, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_store(d_in: usize, d_h: usize, seed: u64) -> (ParamStore, BiLstm) {
        let mut rng = RngState::new(seed);
        let mut store = ParamStore::new();
        let lstm = BiLstm::register(&mut store, "enc", d_in, d_h, &mut rng).unwrap();
        // Larger weights than the default init exercise the nonlinearities.
        for id in store.ids().collect::<Vec<_>>() {
            let shape = store.value(id).shape().to_vec();
            store.set_value(id, Tensor::uniform(&shape, 0.8, &mut rng)).unwrap();
        }
        (store, lstm)
    }

    #[test]
    fn zero_weights_give_zero_outputs() {
        let mut rng = RngState::new(0);
        let mut store = ParamStore::new();
        let lstm = BiLstm::register(&mut store, "enc", 3, 2, &mut rng).unwrap();
        for id in store.ids().collect::<Vec<_>>() {
            store.value_mut(id).fill(0.0);
        }
        let x = Tensor::uniform(&[4, 3], 1.0, &mut rng);
        let (out, _) = lstm.forward(&store, &x);
        assert!(out.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn single_step_sees_same_input_both_ways() {
        let (store, lstm) = random_store(3, 2, 5);
        let mut rng = RngState::new(1);
        let x = Tensor::uniform(&[1, 3], 1.0, &mut rng);
        let (out, _) = lstm.forward(&store, &x);
        let f = lstm_forward(lstm.forward.weights(&store), &x, false);
        let b = lstm_forward(lstm.backward.weights(&store), &x, false);
        assert_eq!(&out.row(0)[..2], f.hidden.row(0));
        assert_eq!(&out.row(0)[2..], b.hidden.row(0));
    }

    #[test]
    fn direction_symmetry() {
        let (store, lstm) = random_store(3, 4, 11);
        let swapped = BiLstm {
            forward: lstm.backward,
            backward: lstm.forward,
            ..lstm
        };
        let mut rng = RngState::new(2);
        let x = Tensor::uniform(&[5, 3], 1.0, &mut rng);
        let mut rev = Tensor::zeros(&[5, 3]);
        for i in 0..5 {
            rev.row_mut(i).copy_from_slice(x.row(4 - i));
        }
        let (out, _) = lstm.forward(&store, &x);
        let (out_rev, _) = swapped.forward(&store, &rev);
        for i in 0..5 {
            let a = out.row(i);
            let b = out_rev.row(4 - i);
            for j in 0..4 {
                assert!((a[j] - b[4 + j]).abs() < 1e-14);
                assert!((a[4 + j] - b[j]).abs() < 1e-14);
            }
        }
    }
}
