use serde::{Deserialize, Serialize};

/// Which distribution a record holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttentionKind {
    /// Teacher (document model) attention.
    Alpha,
    /// Student (aspect model) attention.
    Beta,
    /// Distance-reweighted teacher attention used as a guidance target.
    Delta,
    /// Fused teacher/student attention.
    Gamma,
}

/// Per-token attention distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionRecord {
    pub weights: Vec<f64>,
    pub kind: AttentionKind,
}

impl AttentionRecord {
    pub fn new(weights: Vec<f64>, kind: AttentionKind) -> Self {
        AttentionRecord { weights, kind }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Non-negative entries summing to one within `tol`.
    pub fn is_distribution(&self, tol: f64) -> bool {
        !self.weights.is_empty()
            && self.weights.iter().all(|w| *w >= 0.0 && w.is_finite())
            && (self.weights.iter().sum::<f64>() - 1.0).abs() <= tol
    }

    /// Index of the largest weight (lowest index on ties).
    pub fn argmax(&self) -> usize {
        crate::metrics::argmax(&self.weights)
    }
}
