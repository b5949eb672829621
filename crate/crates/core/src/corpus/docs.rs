use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::corpus::{tokenize, DocPolarity, DocSample};
use crate::error::{AtnError, Result};
use crate::kernels::RngState;

/// Maximum document length kept at ingestion.
pub const DEFAULT_MAX_DOC_LEN: usize = 500;

/// How a review file encodes its labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelScheme {
    /// Every line of the file has this polarity.
    PerFile(DocPolarity),
    /// The first whitespace-separated field of each line is the label.
    LeadingField,
}

/// Label tokens accepted by [`LabelScheme::LeadingField`].
pub fn parse_doc_label(token: &str) -> Option<DocPolarity> {
    match token.to_ascii_lowercase().as_str() {
        "positive" | "pos" | "1" | "__label__2" => Some(DocPolarity::Positive),
        "negative" | "neg" | "0" | "__label__1" => Some(DocPolarity::Negative),
        _ => None,
    }
}

/// Reads one review per line. Blank lines are skipped; documents are cut to
/// `max_len` tokens.
pub fn load_doc_corpus(path: &Path, scheme: LabelScheme, max_len: usize) -> Result<Vec<DocSample>> {
    let reader = BufReader::new(File::open(path)?);
    let mut docs = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        let (label, body) = match scheme {
            LabelScheme::PerFile(p) => (p, line.as_str()),
            LabelScheme::LeadingField => {
                let trimmed = line.trim_start();
                if trimmed.is_empty() {
                    continue;
                }
                let split = trimmed.find(char::is_whitespace).unwrap_or(trimmed.len());
                let (head, rest) = trimmed.split_at(split);
                let label = parse_doc_label(head).ok_or_else(|| AtnError::Ingest {
                    path: path.to_path_buf(),
                    line: line_no,
                    message: format!("unknown label {head:?}"),
                })?;
                (label, rest)
            }
        };
        let mut tokens = tokenize(body);
        if tokens.is_empty() {
            continue;
        }
        tokens.truncate(max_len);
        docs.push(DocSample { tokens, label });
    }
    Ok(docs)
}

/// Stratified, seeded subsample: each class keeps `round(fraction * count)`
/// documents, in their original order.
pub fn subsample_docs(samples: &[DocSample], fraction: f64, seed: u64) -> Vec<DocSample> {
    assert!((0.0..=1.0).contains(&fraction), "fraction must lie in [0, 1]");
    let mut rng = RngState::new(seed);
    let mut keep = vec![false; samples.len()];
    for class in [DocPolarity::Positive, DocPolarity::Negative] {
        let mut idx: Vec<usize> = (0..samples.len()).filter(|i| samples[*i].label == class).collect();
        let take = (fraction * idx.len() as f64).round() as usize;
        rng.shuffle(&mut idx);
        for i in idx.into_iter().take(take) {
            keep[i] = true;
        }
    }
    samples
        .iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(s, _)| s.clone())
        .collect()
}
