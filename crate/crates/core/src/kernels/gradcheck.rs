//! Central-difference gradient verification.

use crate::kernels::params::{GradBuffer, ParamStore};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Location of the worst component, as `name[index]`.
    pub worst: String,
    pub checked: usize,
}

/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares `analytic` to `(f(x+eps) - f(x-eps)) / 2eps` for every
/// component of `x`.
pub fn grad_check(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], analytic: &[f64], eps: f64) -> GradCheckReport {
    assert_eq!(x.len(), analytic.len());
    let mut probe = x.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: String::new(),
        checked: 0,
    };
    for i in 0..x.len() {
        probe[i] = x[i] + eps;
        let up = f(&probe);
        probe[i] = x[i] - eps;
        let down = f(&probe);
        probe[i] = x[i];
        let err = relative_error(analytic[i], (up - down) / (2.0 * eps));
        report.checked += 1;
        if err > report.max_rel_error || report.worst.is_empty() {
            report.max_rel_error = err;
            report.worst = format!("x[{i}]");
        }
    }
    report
}

/// Gradient check over every trainable parameter of `store`.
///
/// `loss` must be deterministic given the store contents; `analytic` holds
/// the gradients the backward pass produced at the current values.
pub fn grad_check_store(
    store: &mut ParamStore,
    mut loss: impl FnMut(&ParamStore) -> f64,
    analytic: &GradBuffer,
    eps: f64,
) -> GradCheckReport {
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: String::new(),
        checked: 0,
    };
    let ids: Vec<_> = store.ids().filter(|id| store.is_trainable(*id)).collect();
    for id in ids {
        for i in 0..store.value(id).len() {
            let orig = store.value(id).data()[i];
            store.value_mut(id).data_mut()[i] = orig + eps;
            let up = loss(store);
            store.value_mut(id).data_mut()[i] = orig - eps;
            let down = loss(store);
            store.value_mut(id).data_mut()[i] = orig;
            let err = relative_error(analytic.get(id).data()[i], (up - down) / (2.0 * eps));
            report.checked += 1;
            if err > report.max_rel_error || report.worst.is_empty() {
                report.max_rel_error = err;
                report.worst = format!("{}[{i}]", store.name(id));
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        let x = [0.3, -1.2, 2.5, 0.0];
        let g: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let r = grad_check(|p| p.iter().map(|v| v * v).sum(), &x, &g, 1e-5);
        assert!(r.max_rel_error < 1e-9, "{r:?}");
    }

    #[test]
    fn corrupted_gradient_is_flagged() {
        let x = [0.3, -1.2, 2.5];
        let mut g: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        g[1] *= 1.1;
        let r = grad_check(|p| p.iter().map(|v| v * v).sum(), &x, &g, 1e-5);
        assert!(r.max_rel_error > 1e-2);
        assert_eq!(r.worst, "x[1]");
    }
}
