//! Gradient checks shared by the gradient tests and the acceptance suite.

use atn_core::asc::{BaseObjective, StudentObjective};
use atn_core::kernels::{
    bilinear_scores, bilinear_scores_backward, cross_entropy, cross_entropy_backward, grad_check, guidance_loss,
    guidance_loss_backward, linear, linear_backward, lstm_backward, lstm_forward, softmax, softmax_backward,
    weighted_sum, weighted_sum_backward, BiLstm, BilinearGrads, GradCheckReport, LstmGrads, LstmWeights,
    ParamStore, RngState, Tensor,
};
use atn_core::network::Pass;
use atn_core::transfer::{
    fuse_attention_backward, fuse_attention_with, FusionGate, FusionObjective, GuidanceConfig, GuidanceObjective,
    Normalization, Teacher,
};

use super::*;

const EPS: f64 = 1e-6;
/// Step for the five-point model checks.
const MODEL_EPS: f64 = 1e-3;
const INSTANCES: u64 = 4;

/// Named results of one family of checks.
pub type Checks = Vec<(String, GradCheckReport)>;

fn uniform(n: usize, bound: f64, rng: &mut RngState) -> Vec<f64> {
    (0..n).map(|_| rng.uniform(-bound, bound)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn tensor(shape: &[usize], data: &[f64]) -> Tensor {
    Tensor::from_vec(shape, data.to_vec()).unwrap()
}

pub fn softmax_gradient(out: &mut Checks) {
    for seed in 0..INSTANCES {
        let mut rng = RngState::new(seed);
        let n = 2 + rng.below(5);
        let x = uniform(n, 2.0, &mut rng);
        let c = uniform(n, 1.0, &mut rng);
        let analytic = softmax_backward(&softmax(&x), &c);
        push(out, "softmax", &grad_check(|v| dot(&softmax(v), &c), &x, &analytic, EPS));
    }
}

pub fn bilinear_gradient(out: &mut Checks) {
    for seed in 0..INSTANCES {
        let mut rng = RngState::new(seed);
        let (n, d, k) = (1 + rng.below(6), 1 + rng.below(5), 1 + rng.below(5));
        let h = uniform(n * d, 1.0, &mut rng);
        let w = uniform(d * k, 1.0, &mut rng);
        let q = uniform(k, 1.0, &mut rng);
        let b = rng.uniform(-1.0, 1.0);
        let c = uniform(n, 1.0, &mut rng);
        let f = |h: &[f64], w: &[f64], q: &[f64], b: f64| {
            dot(&bilinear_scores(&tensor(&[n, d], h), &tensor(&[d, k], w), q, b).0, &c)
        };
        let (ht, wt) = (tensor(&[n, d], &h), tensor(&[d, k], &w));
        let (_, wq) = bilinear_scores(&ht, &wt, &q, b);
        let (mut dh, mut dw, mut dq, mut db) = (Tensor::zeros(&[n, d]), Tensor::zeros(&[d, k]), vec![0.0; k], 0.0);
        bilinear_scores_backward(
            &ht,
            &wt,
            &q,
            &wq,
            &c,
            BilinearGrads {
                h: &mut dh,
                w: &mut dw,
                q: &mut dq,
                b: &mut db,
            },
        );
        push(out, "bilinear h", &grad_check(|v| f(v, &w, &q, b), &h, dh.data(), EPS));
        push(out, "bilinear W", &grad_check(|v| f(&h, v, &q, b), &w, dw.data(), EPS));
        push(out, "bilinear q", &grad_check(|v| f(&h, &w, v, b), &q, &dq, EPS));
        push(out, "bilinear b", &grad_check(|v| f(&h, &w, &q, v[0]), &[b], &[db], EPS));
    }
}

pub fn weighted_sum_gradient(out: &mut Checks) {
    for seed in 0..INSTANCES {
        let mut rng = RngState::new(seed);
        let (n, d) = (1 + rng.below(6), 1 + rng.below(6));
        let h = uniform(n * d, 1.0, &mut rng);
        let w = uniform(n, 1.0, &mut rng);
        let c = uniform(d, 1.0, &mut rng);
        let f = |h: &[f64], w: &[f64]| dot(&weighted_sum(&tensor(&[n, d], h), w).unwrap(), &c);
        let (mut dh, mut dw) = (Tensor::zeros(&[n, d]), vec![0.0; n]);
        weighted_sum_backward(&tensor(&[n, d], &h), &w, &c, &mut dh, &mut dw);
        push(out, "weighted sum h", &grad_check(|v| f(v, &w), &h, dh.data(), EPS));
        push(out, "weighted sum w", &grad_check(|v| f(&h, v), &w, &dw, EPS));
    }
}

pub fn linear_gradient(out: &mut Checks) {
    for seed in 0..INSTANCES {
        let mut rng = RngState::new(seed);
        let (o, i) = (1 + rng.below(4), 1 + rng.below(6));
        let w = uniform(o * i, 1.0, &mut rng);
        let b = uniform(o, 1.0, &mut rng);
        let x = uniform(i, 1.0, &mut rng);
        let c = uniform(o, 1.0, &mut rng);
        let f = |w: &[f64], b: &[f64], x: &[f64]| dot(&linear(&tensor(&[o, i], w), &Tensor::vector(b.to_vec()), x).unwrap(), &c);
        let (mut dw, mut db, mut dx) = (Tensor::zeros(&[o, i]), Tensor::zeros(&[o]), vec![0.0; i]);
        linear_backward(&tensor(&[o, i], &w), &x, &c, &mut dw, &mut db, &mut dx);
        push(out, "linear W", &grad_check(|v| f(v, &b, &x), &w, dw.data(), EPS));
        push(out, "linear b", &grad_check(|v| f(&w, v, &x), &b, db.data(), EPS));
        push(out, "linear x", &grad_check(|v| f(&w, &b, v), &x, &dx, EPS));
    }
}

pub fn cross_entropy_and_guidance_gradients(out: &mut Checks) {
    for seed in 0..INSTANCES {
        let mut rng = RngState::new(seed);
        let n = 2 + rng.below(5);
        let p: Vec<f64> = (0..n).map(|_| rng.uniform(0.05, 1.0)).collect();
        let gold = rng.below(n);
        let analytic = cross_entropy_backward(&p, gold);
        push(out, "cross entropy", &grad_check(|v| cross_entropy(v, gold), &p, &analytic, EPS));

        let delta = softmax(&uniform(n, 2.0, &mut rng));
        let lambda = rng.uniform(0.1, 2.0);
        let mut d_beta = vec![0.0; n];
        guidance_loss_backward(&delta, &p, lambda, &mut d_beta);
        let r = grad_check(|v| lambda * guidance_loss(&delta, v).unwrap(), &p, &d_beta, EPS);
        push(out, "guidance", &r);
    }
}

pub fn lstm_direction_gradients(out: &mut Checks) {
    for seed in 0..INSTANCES {
        for reverse in [false, true] {
            let mut rng = RngState::new(seed);
            let (n, d_in, h) = (1 + rng.below(6), 1 + rng.below(4), 1 + rng.below(5));
            let w_ih = uniform(4 * h * d_in, 0.8, &mut rng);
            let w_hh = uniform(4 * h * h, 0.8, &mut rng);
            let bias = uniform(4 * h, 0.8, &mut rng);
            let x = uniform(n * d_in, 1.0, &mut rng);
            let c = uniform(n * h, 1.0, &mut rng);
            let f = |w_ih: &[f64], w_hh: &[f64], bias: &[f64], x: &[f64]| {
                let (a, b, bb) = (tensor(&[4 * h, d_in], w_ih), tensor(&[4 * h, h], w_hh), Tensor::vector(bias.to_vec()));
                let w = LstmWeights { w_ih: &a, w_hh: &b, bias: &bb };
                dot(lstm_forward(w, &tensor(&[n, d_in], x), reverse).hidden.data(), &c)
            };
            let (a, b, bb, xt) = (
                tensor(&[4 * h, d_in], &w_ih),
                tensor(&[4 * h, h], &w_hh),
                Tensor::vector(bias.clone()),
                tensor(&[n, d_in], &x),
            );
            let w = LstmWeights { w_ih: &a, w_hh: &b, bias: &bb };
            let cache = lstm_forward(w, &xt, reverse);
            let (mut g_ih, mut g_hh, mut g_b, mut d_x) =
                (Tensor::zeros(&[4 * h, d_in]), Tensor::zeros(&[4 * h, h]), Tensor::zeros(&[4 * h]), Tensor::zeros(&[n, d_in]));
            lstm_backward(
                w,
                &xt,
                &cache,
                &tensor(&[n, h], &c),
                LstmGrads {
                    w_ih: &mut g_ih,
                    w_hh: &mut g_hh,
                    bias: &mut g_b,
                },
                &mut d_x,
            );
            let tag = if reverse { "reverse" } else { "forward" };
            push(out, tag, &grad_check(|v| f(v, &w_hh, &bias, &x), &w_ih, g_ih.data(), EPS));
            push(out, tag, &grad_check(|v| f(&w_ih, v, &bias, &x), &w_hh, g_hh.data(), EPS));
            push(out, tag, &grad_check(|v| f(&w_ih, &w_hh, v, &x), &bias, g_b.data(), EPS));
            push(out, tag, &grad_check(|v| f(&w_ih, &w_hh, &bias, v), &x, d_x.data(), EPS));
        }
    }
}

pub fn bilstm_store_gradients(out: &mut Checks) {
    for seed in 0..INSTANCES {
        let mut rng = RngState::new(seed);
        let (n, d_in, h) = (2 + rng.below(5), 3, 1 + rng.below(4));
        let mut store = ParamStore::new();
        let bilstm = BiLstm::register(&mut store, "enc", d_in, h, &mut rng).unwrap();
        scale_params(&mut store, 6.0);
        let x = tensor(&[n, d_in], &uniform(n * d_in, 1.0, &mut rng));
        let c = tensor(&[n, 2 * h], &uniform(n * 2 * h, 1.0, &mut rng));
        let (_, cache) = bilstm.forward(&store, &x);
        let mut grads = store.grad_buffer();
        let mut d_x = Tensor::zeros(&[n, d_in]);
        bilstm.backward(&store, &x, &cache, &c, &mut grads, &mut d_x);
        let r = atn_core::kernels::grad_check_store(&mut store, |s| dot(bilstm.forward(s, &x).0.data(), c.data()), &grads, EPS);
        push(out, "bilstm params", &r);
        let r = grad_check(
            |v| dot(bilstm.forward(&store, &tensor(&[n, d_in], v)).0.data(), c.data()),
            x.data(),
            d_x.data(),
            EPS,
        );
        push(out, "bilstm input", &r);
    }
}

pub fn fusion_gradient(out: &mut Checks) {
    for norm in [Normalization::Softmax, Normalization::Linear] {
        for seed in 0..INSTANCES {
            let mut rng = RngState::new(seed);
            let n = 1 + rng.below(6);
            let alpha = softmax(&uniform(n, 2.0, &mut rng));
            let beta = softmax(&uniform(n, 2.0, &mut rng));
            let w_g = [rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0)];
            let c = uniform(n, 1.0, &mut rng);
            let f = |beta: &[f64], w_g: [f64; 2]| dot(&fuse_attention_with(&alpha, beta, w_g, norm).unwrap().weights, &c);
            let fused = fuse_attention_with(&alpha, &beta, w_g, norm).unwrap();
            let (mut d_beta, mut d_w) = (vec![0.0; n], vec![0.0; 2]);
            fuse_attention_backward(&alpha, &beta, w_g, &fused, norm, &c, &mut d_beta, &mut d_w);
            push(out, "fusion beta", &grad_check(|v| f(v, w_g), &beta, &d_beta, EPS));
            push(out, "fusion gate", &grad_check(|v| f(&beta, [v[0], v[1]]), &w_g, &d_w, EPS));
        }
    }
}

pub fn document_model_gradient(out: &mut Checks) {
    for seed in 0..INSTANCES {
        let mut rng = RngState::new(seed);
        let mut model = dsc_model(seed, 1 + rng.below(4));
        scale_params(atn_core::train::Trainable::store_mut(&mut model), 5.0);
        let doc = random_doc(2 + rng.below(5), &mut rng);
        let mut grads = model.params().grad_buffer();
        model.loss_and_grad(&doc, &mut Pass::Inference, &mut grads).unwrap();
        let loss = |m: &atn_core::dsc::DscModel| {
            let mut scratch = m.params().grad_buffer();
            m.loss_and_grad(&doc, &mut Pass::Inference, &mut scratch).unwrap()
        };
        push(out, "document model", &check_model(&mut model, loss, &grads, MODEL_EPS));
    }
}

fn check_student(objective: &dyn StudentObjective, model: &mut atn_core::asc::AscModel, rng: &mut RngState) -> GradCheckReport {
    let sample = random_aspect(2 + rng.below(5), rng);
    let mut grads = model.params().grad_buffer();
    objective.loss_and_grad(model, &sample, &mut Pass::Inference, &mut grads).unwrap();
    let loss = |m: &atn_core::asc::AscModel| {
        let mut scratch = m.params().grad_buffer();
        objective.loss_and_grad(m, &sample, &mut Pass::Inference, &mut scratch).unwrap()
    };
    check_model(model, loss, &grads, MODEL_EPS)
}

pub fn base_student_gradient(out: &mut Checks) {
    for seed in 0..INSTANCES {
        for d_p in [0, 3] {
            let mut rng = RngState::new(seed);
            let mut model = asc_model(seed, 1 + rng.below(4), d_p);
            scale_params(model.params_mut(), 5.0);
            push(out, "base student", &check_student(&BaseObjective, &mut model, &mut rng));
        }
    }
}

fn frozen_teacher(seed: u64) -> atn_core::dsc::DscModel {
    let mut teacher = dsc_model(seed + 50, 3);
    scale_params(teacher.params_mut().unwrap(), 8.0);
    teacher.freeze();
    teacher
}

pub fn guided_student_gradient(out: &mut Checks) {
    for norm in [Normalization::Softmax, Normalization::Linear] {
        for seed in 0..INSTANCES {
            let mut rng = RngState::new(seed);
            let teacher = frozen_teacher(seed);
            let config = GuidanceConfig {
                lambda: rng.uniform(0.1, 1.0),
                normalization: norm,
            };
            let objective = GuidanceObjective::new(Teacher::Model(&teacher), config).unwrap();
            let mut model = asc_model(seed, 1 + rng.below(4), 3);
            scale_params(model.params_mut(), 5.0);
            push(out, "guided student", &check_student(&objective, &mut model, &mut rng));
        }
    }
}

pub fn fused_student_gradient(out: &mut Checks) {
    for norm in [Normalization::Softmax, Normalization::Linear] {
        for seed in 0..INSTANCES {
            let mut rng = RngState::new(seed);
            let teacher = frozen_teacher(seed);
            let mut model = asc_model(seed, 1 + rng.below(4), 3);
            let gate = FusionGate::attach(&mut model, &mut rng).unwrap();
            scale_params(model.params_mut(), 5.0);
            let objective = FusionObjective::new(Teacher::Model(&teacher), gate, norm).unwrap();
            let r = check_student(&objective, &mut model, &mut rng);
            assert!(r.checked > model.params().value(gate.id).len(), "gate parameters not checked");
            push(out, "fused student", &r);
        }
    }
}

fn push(out: &mut Checks, what: &str, r: &GradCheckReport) {
    out.push((what.to_string(), r.clone()));
}

/// Every kernel and model check, in a fixed order.
pub fn all() -> Checks {
    let mut out = Vec::new();
    for f in [
        softmax_gradient,
        bilinear_gradient,
        weighted_sum_gradient,
        linear_gradient,
        cross_entropy_and_guidance_gradients,
        lstm_direction_gradients,
        bilstm_store_gradients,
        fusion_gradient,
        document_model_gradient,
        base_student_gradient,
        guided_student_gradient,
        fused_student_gradient,
    ] {
        f(&mut out);
    }
    out
}
