use crate::error::{AtnError, Result};
use crate::kernels::rng::RngState;
use crate::kernels::tensor::Tensor;

/// Handle to one parameter inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone)]
struct Param {
    name: String,
    value: Tensor,
    grad: Tensor,
    momentum: Tensor,
    trainable: bool,
}

/// Named parameters with their gradient and momentum buffers.
///
/// Insertion order is preserved and is the canonical order for
/// serialization and gradient checking.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, value: Tensor) -> Result<ParamId> {
        if self.find(name).is_some() {
            return Err(AtnError::arg(format!("duplicate parameter {name}")));
        }
        let shape = value.shape().to_vec();
        self.params.push(Param {
            name: name.to_string(),
            grad: Tensor::zeros(&shape),
            momentum: Tensor::zeros(&shape),
            value,
            trainable: true,
        });
        Ok(ParamId(self.params.len() - 1))
    }

    /// Adds a parameter initialized from U(-0.1, 0.1).
    pub fn add_uniform(&mut self, name: &str, shape: &[usize], rng: &mut RngState) -> Result<ParamId> {
        self.add(name, Tensor::uniform(shape, 0.1, rng))
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].grad
    }

    pub fn momentum(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].momentum
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.params[id.0].trainable
    }

    pub fn set_trainable(&mut self, id: ParamId, trainable: bool) {
        self.params[id.0].trainable = trainable;
    }

    pub fn freeze_all(&mut self) {
        self.params.iter_mut().for_each(|p| p.trainable = false);
    }

    /// Replaces a parameter value, keeping its shape.
    pub fn set_value(&mut self, id: ParamId, value: Tensor) -> Result<()> {
        let p = &mut self.params[id.0];
        if p.value.shape() != value.shape() {
            return Err(AtnError::arg(format!(
                "parameter {} has shape {:?}, got {:?}",
                p.name,
                p.value.shape(),
                value.shape()
            )));
        }
        p.value = value;
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        self.params.iter_mut().for_each(|p| p.grad.fill(0.0));
    }

    /// Adds `scale * buffer` into the stored gradients.
    pub fn accumulate(&mut self, buffer: &GradBuffer, scale: f64) {
        debug_assert_eq!(buffer.grads.len(), self.params.len());
        for (p, g) in self.params.iter_mut().zip(&buffer.grads) {
            p.grad.add_scaled(g, scale);
        }
    }

    /// Fresh zeroed gradient buffer shaped like this store.
    pub fn grad_buffer(&self) -> GradBuffer {
        GradBuffer {
            grads: self
                .params
                .iter()
                .map(|p| Tensor::zeros(p.value.shape()))
                .collect(),
        }
    }

    /// Copies of all parameter values, in store order.
    pub fn snapshot(&self) -> Vec<Tensor> {
        self.params.iter().map(|p| p.value.clone()).collect()
    }

    pub fn restore(&mut self, snapshot: &[Tensor]) {
        assert_eq!(snapshot.len(), self.params.len());
        for (p, v) in self.params.iter_mut().zip(snapshot) {
            p.value.clone_from(v);
        }
    }

    /// Order-sensitive checksum over the exact bit patterns of every value.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for p in &self.params {
            for b in p.name.bytes() {
                h = (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3);
            }
            for x in p.value.data() {
                h = (h ^ x.to_bits()).wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }

    pub(crate) fn momentum_step(&mut self, lr: f64, mu: f64) {
        for p in self.params.iter_mut() {
            if p.trainable {
                let v = p.momentum.data_mut();
                let g = p.grad.data();
                let w = p.value.data_mut();
                for ((vi, gi), wi) in v.iter_mut().zip(g).zip(w.iter_mut()) {
                    *vi = mu * *vi + gi;
                    *wi -= lr * *vi;
                }
            }
            p.grad.fill(0.0);
        }
    }
}

/// Gradient accumulator shaped like a [`ParamStore`], used for per-sample
/// backward passes that may run on worker threads.
#[derive(Debug, Clone)]
pub struct GradBuffer {
    grads: Vec<Tensor>,
}

impl GradBuffer {
    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.grads[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.grads[id.0]
    }

    /// Mutable access to several distinct gradients at once.
    pub fn disjoint_mut<const N: usize>(&mut self, ids: [ParamId; N]) -> [&mut Tensor; N] {
        self.grads
            .get_disjoint_mut(ids.map(|id| id.0))
            .expect("distinct parameter ids")
    }

    pub fn add(&mut self, other: &GradBuffer) {
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            a.add_scaled(b, 1.0);
        }
    }

    pub fn clear(&mut self) {
        self.grads.iter_mut().for_each(|g| g.fill(0.0));
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.grads
    }

    /// Largest absolute entry of any gradient.
    pub fn max_abs(&self) -> f64 {
        self.grads
            .iter()
            .flat_map(|g| g.data().iter())
            .fold(0.0f64, |m, x| m.max(x.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_names_rejected() {
        let mut store = ParamStore::new();
        store.add("w", Tensor::zeros(&[2])).unwrap();
        assert!(store.add("w", Tensor::zeros(&[2])).is_err());
    }

    #[test]
    fn checksum_tracks_values() {
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::vector(vec![1.0, 2.0])).unwrap();
        let before = store.checksum();
        store.value_mut(id).data_mut()[0] = 1.5;
        assert_ne!(before, store.checksum());
    }

    #[test]
    fn set_value_checks_shape() {
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::zeros(&[2, 2])).unwrap();
        assert!(store.set_value(id, Tensor::zeros(&[4])).is_err());
        assert!(store.set_value(id, Tensor::zeros(&[2, 2])).is_ok());
    }
}
