//! Dataset ingestion: tokenization, SemEval XML, review corpora, vocabulary,
//! pretrained vectors and target-relative distances.

mod docs;
mod semeval;
mod tokenize;
mod vectors;
mod vocab;

pub use docs::{load_doc_corpus, parse_doc_label, subsample_docs, LabelScheme, DEFAULT_MAX_DOC_LEN};
pub use semeval::{align_char_span, parse_aspect_xml, ParseReport, UnalignedTerm};
pub use tokenize::{is_punctuation, tokenize, tokenize_with_offsets, Token};
pub use vectors::{load_word_vectors, EmbeddingMatrix, VectorLoadStats};
pub use vocab::{build_vocab, build_vocab_per_corpus, MinCounts, Vocabulary, PAD, UNK};

use std::path::Path;

use crate::error::{AtnError, Result};

/// Three-way aspect polarity. The discriminant is the class index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AspectPolarity {
    Positive = 0,
    Neutral = 1,
    Negative = 2,
}

impl AspectPolarity {
    pub const ALL: [AspectPolarity; 3] = [Self::Positive, Self::Neutral, Self::Negative];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Positive => "positive",
            Self::Neutral => "neutral",
            Self::Negative => "negative",
        }
    }
}

/// Binary document polarity. The discriminant is the class index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DocPolarity {
    Positive = 0,
    Negative = 1,
}

impl DocPolarity {
    pub fn index(self) -> usize {
        self as usize
    }
}

/// A sentence with one opinion target (1-based inclusive token span).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AspectSample {
    pub tokens: Vec<String>,
    pub target_lo: usize,
    pub target_hi: usize,
    pub label: AspectPolarity,
}

impl AspectSample {
    pub fn new(tokens: Vec<String>, target_lo: usize, target_hi: usize, label: AspectPolarity) -> Result<Self> {
        if tokens.is_empty() || target_lo < 1 || target_lo > target_hi || target_hi > tokens.len() {
            return Err(AtnError::arg(format!(
                "target span [{target_lo}, {target_hi}] invalid for {} tokens",
                tokens.len()
            )));
        }
        Ok(AspectSample {
            tokens,
            target_lo,
            target_hi,
            label,
        })
    }

    pub fn target_tokens(&self) -> &[String] {
        &self.tokens[self.target_lo - 1..self.target_hi]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocSample {
    pub tokens: Vec<String>,
    pub label: DocPolarity,
}

/// Reads and parses a SemEval XML file.
pub fn load_aspect_file(path: &Path) -> Result<ParseReport> {
    let bytes = std::fs::read(path)?;
    parse_aspect_xml(&bytes)
}

/// Distance of every position to the target span (1-based `lo..=hi`):
/// `lo - i` before it, 0 inside, `i - hi` after.
pub fn relative_distances(n: usize, target_lo: usize, target_hi: usize) -> Result<Vec<usize>> {
    if target_lo < 1 || target_lo > target_hi || target_hi > n {
        return Err(AtnError::arg(format!(
            "target span [{target_lo}, {target_hi}] out of bounds for length {n}"
        )));
    }
    Ok((1..=n)
        .map(|i| target_lo.saturating_sub(i).max(i.saturating_sub(target_hi)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distances_examples() {
        assert_eq!(relative_distances(10, 8, 8).unwrap(), vec![7, 6, 5, 4, 3, 2, 1, 0, 1, 2]);
        assert_eq!(relative_distances(4, 1, 4).unwrap(), vec![0; 4]);
        assert!(relative_distances(4, 0, 1).is_err());
        assert!(relative_distances(4, 3, 2).is_err());
        assert!(relative_distances(4, 2, 5).is_err());
    }

    #[test]
    fn aspect_sample_validates_span() {
        let toks = vec!["a".to_string(), "b".to_string()];
        assert!(AspectSample::new(toks.clone(), 1, 2, AspectPolarity::Positive).is_ok());
        assert!(AspectSample::new(toks.clone(), 2, 3, AspectPolarity::Positive).is_err());
        assert!(AspectSample::new(vec![], 1, 1, AspectPolarity::Positive).is_err());
    }
}
