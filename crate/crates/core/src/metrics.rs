//! Accuracy, per-class precision/recall/F1 and macro-F1.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{AtnError, Result};

/// Index of the largest value; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

/// Evaluation summary. Percentages are on a 0-100 scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub per_class: Vec<ClassMetrics>,
    /// `confusion[gold][predicted]`
    pub confusion: Vec<Vec<usize>>,
}

impl MetricsReport {
    pub fn from_predictions(gold: &[usize], predicted: &[usize], classes: usize) -> Result<Self> {
        if gold.len() != predicted.len() {
            return Err(AtnError::arg("gold and predicted lengths differ"));
        }
        let mut confusion = vec![vec![0usize; classes]; classes];
        for (&g, &p) in gold.iter().zip(predicted) {
            if g >= classes || p >= classes {
                return Err(AtnError::arg(format!("class index out of range for {classes} classes")));
            }
            confusion[g][p] += 1;
        }
        Ok(Self::from_confusion(confusion))
    }

    pub fn from_confusion(confusion: Vec<Vec<usize>>) -> Self {
        let classes = confusion.len();
        let total: usize = confusion.iter().flatten().sum();
        let correct: usize = (0..classes).map(|c| confusion[c][c]).sum();
        let per_class: Vec<ClassMetrics> = (0..classes)
            .map(|c| {
                let tp = confusion[c][c] as f64;
                let support: usize = confusion[c].iter().sum();
                let predicted: usize = confusion.iter().map(|row| row[c]).sum();
                let precision = if predicted == 0 { 0.0 } else { tp / predicted as f64 };
                let recall = if support == 0 { 0.0 } else { tp / support as f64 };
                let f1 = if precision + recall == 0.0 {
                    0.0
                } else {
                    2.0 * precision * recall / (precision + recall)
                };
                ClassMetrics {
                    precision: 100.0 * precision,
                    recall: 100.0 * recall,
                    f1: 100.0 * f1,
                    support,
                }
            })
            .collect();
        let macro_f1 = if classes == 0 {
            0.0
        } else {
            per_class.iter().map(|m| m.f1).sum::<f64>() / classes as f64
        };
        MetricsReport {
            accuracy: if total == 0 { 0.0 } else { 100.0 * correct as f64 / total as f64 },
            macro_f1,
            per_class,
            confusion,
        }
    }

    pub fn total(&self) -> usize {
        self.confusion.iter().flatten().sum()
    }
}

/// Something with a gold class index.
pub trait Labeled {
    fn gold(&self) -> usize;
}

/// Runs `predict` over every sample (in parallel, order-preserving) and
/// scores argmax predictions.
pub fn evaluate<T, F>(samples: &[T], classes: usize, predict: F) -> Result<MetricsReport>
where
    T: Labeled + Sync,
    F: Fn(&T) -> Result<Vec<f64>> + Sync,
{
    if samples.is_empty() {
        return Err(AtnError::arg("cannot evaluate an empty sample set"));
    }
    let predicted = samples
        .par_iter()
        .map(|s| predict(s).map(|p| argmax(&p)))
        .collect::<Result<Vec<_>>>()?;
    let gold: Vec<usize> = samples.iter().map(Labeled::gold).collect();
    MetricsReport::from_predictions(&gold, &predicted, classes)
}

/// Constant classifier predicting the most frequent training label (lowest
/// class index on ties).
pub fn majority_baseline<T: Labeled>(train: &[T], test: &[T], classes: usize) -> Result<MetricsReport> {
    if train.is_empty() {
        return Err(AtnError::arg("majority baseline needs training samples"));
    }
    let mut counts = vec![0usize; classes];
    for s in train {
        counts[s.gold()] += 1;
    }
    let counts_f: Vec<f64> = counts.iter().map(|c| *c as f64).collect();
    let mode = argmax(&counts_f);
    let gold: Vec<usize> = test.iter().map(Labeled::gold).collect();
    MetricsReport::from_predictions(&gold, &vec![mode; gold.len()], classes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_classifier() {
        let r = MetricsReport::from_predictions(&[0, 1, 2, 1], &[0, 1, 2, 1], 3).unwrap();
        assert_eq!(r.accuracy, 100.0);
        assert_eq!(r.macro_f1, 100.0);
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
        assert_eq!(argmax(&[1.0, 1.0]), 0);
    }

    #[test]
    fn constant_classifier_macro_f1_is_predicted_class_f1_over_three() {
        let gold = [0, 0, 0, 1, 2];
        let r = MetricsReport::from_predictions(&gold, &[0; 5], 3).unwrap();
        assert!((r.macro_f1 - r.per_class[0].f1 / 3.0).abs() < 1e-12);
        assert_eq!(r.per_class[1].f1, 0.0);
    }

    struct L(usize);
    impl Labeled for L {
        fn gold(&self) -> usize {
            self.0
        }
    }

    #[test]
    fn majority_of_single_class_train() {
        let train = [L(2), L(2)];
        let test = [L(0), L(2), L(2), L(1)];
        let r = majority_baseline(&train, &test, 3).unwrap();
        assert_eq!(r.accuracy, 50.0);
        assert!(majority_baseline::<L>(&[], &test, 3).is_err());
    }
}
