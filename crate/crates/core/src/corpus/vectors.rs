use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::corpus::Vocabulary;
use crate::error::{AtnError, Result};
use crate::kernels::{RngState, Tensor};

/// Word embedding table, `|V| x d_e`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    values: Tensor,
    frozen: bool,
}

impl EmbeddingMatrix {
    pub fn new(values: Tensor, frozen: bool) -> Result<Self> {
        if values.shape().len() != 2 {
            return Err(AtnError::arg("embedding table must be 2-D"));
        }
        Ok(EmbeddingMatrix { values, frozen })
    }

    /// Frozen table with every row but padding drawn from U(-0.1, 0.1).
    pub fn random(vocab_size: usize, dim: usize, rng: &mut RngState) -> Self {
        let mut values = Tensor::uniform(&[vocab_size, dim], 0.1, rng);
        if vocab_size > 0 {
            values.row_mut(Vocabulary::PAD_ID).fill(0.0);
        }
        EmbeddingMatrix { values, frozen: true }
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.cols()
    }

    pub fn rows(&self) -> usize {
        self.values.rows()
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn set_frozen(&mut self, frozen: bool) {
        self.frozen = frozen;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VectorLoadStats {
    pub lines: usize,
    pub found: usize,
}

/// Loads "token v1 ... v_dim" lines. Vocabulary rows present in the file
/// are copied exactly (first occurrence wins); the rest are drawn from
/// U(-0.1, 0.1) and the padding row is zero. The result is frozen.
pub fn load_word_vectors(
    path: &Path,
    vocab: &Vocabulary,
    dim: usize,
    rng: &mut RngState,
) -> Result<(EmbeddingMatrix, VectorLoadStats)> {
    let mut table = EmbeddingMatrix::random(vocab.len(), dim, rng);
    let mut seen = vec![false; vocab.len()];
    let mut stats = VectorLoadStats { lines: 0, found: 0 };
    let reader = BufReader::new(File::open(path)?);
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        stats.lines += 1;
        let mut fields = line.split_whitespace();
        let token = fields.next().unwrap_or_default();
        let values: Vec<&str> = fields.collect();
        if values.len() != dim {
            return Err(AtnError::Ingest {
                path: path.to_path_buf(),
                line: idx + 1,
                message: format!("expected {dim} values, found {}", values.len()),
            });
        }
        if !vocab.contains(token) {
            continue;
        }
        let id = vocab.id(token);
        if seen[id] {
            continue;
        }
        let row = table.values.row_mut(id);
        for (slot, v) in row.iter_mut().zip(&values) {
            *slot = v.parse().map_err(|_| AtnError::Ingest {
                path: path.to_path_buf(),
                line: idx + 1,
                message: format!("not a number: {v:?}"),
            })?;
        }
        seen[id] = true;
        stats.found += 1;
    }
    Ok((table, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn copies_present_rows_and_samples_the_rest() {
        let vocab = Vocabulary::from_tokens(["good".to_string(), "absent".to_string()]).unwrap();
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "other 9 9 9").unwrap();
        writeln!(f, "good 0.5 -1.25 3e-2").unwrap();
        let mut rng = RngState::new(0);
        let (table, stats) = load_word_vectors(f.path(), &vocab, 3, &mut rng).unwrap();
        assert!(table.is_frozen());
        assert_eq!(stats, VectorLoadStats { lines: 2, found: 1 });
        assert_eq!(table.values().row(vocab.id("good")), &[0.5, -1.25, 0.03]);
        assert!(table
            .values()
            .row(vocab.id("absent"))
            .iter()
            .all(|v| (-0.1..0.1).contains(v)));
        assert!(table.values().row(Vocabulary::PAD_ID).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let vocab = Vocabulary::from_tokens(["good".to_string()]).unwrap();
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "good 1 2 3").unwrap();
        writeln!(f, "bad 1 2").unwrap();
        let err = load_word_vectors(f.path(), &vocab, 3, &mut RngState::new(0)).unwrap_err();
        assert!(matches!(err, AtnError::Ingest { line: 2, .. }));
    }
}
