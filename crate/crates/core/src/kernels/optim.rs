use crate::kernels::params::ParamStore;

/// One SGD-with-momentum update over every trainable parameter:
/// `v <- mu*v + grad; param <- param - lr*v`. Frozen parameters are left
/// untouched. All gradients are zeroed afterwards.
pub fn sgd_momentum_step(store: &mut ParamStore, lr: f64, mu: f64) {
    store.momentum_step(lr, mu);
}
