use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::corpus::{AspectSample, DocSample};
use crate::error::{AtnError, Result};

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";

/// Dense token ids. Id 0 is padding and id 1 the unknown token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub const PAD_ID: usize = 0;
    pub const UNK_ID: usize = 1;

    /// Builds from known tokens; the reserved entries are prepended.
    pub fn from_tokens(tokens: impl IntoIterator<Item = String>) -> Result<Self> {
        let mut all = vec![PAD.to_string(), UNK.to_string()];
        all.extend(tokens);
        let mut index = HashMap::with_capacity(all.len());
        for (i, t) in all.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(AtnError::arg(format!("duplicate vocabulary entry {t:?}")));
            }
        }
        Ok(Vocabulary { tokens: all, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(Self::UNK_ID)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// One token per line, in id order, reserved entries excluded.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for t in &self.tokens[2..] {
            out.push_str(t);
            out.push('\n');
        }
        fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_tokens(text.lines().filter(|l| !l.is_empty()).map(str::to_string))
    }
}

/// Frequency thresholds applied per corpus; a token enters the vocabulary
/// if it clears the threshold in either corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MinCounts {
    pub aspect: usize,
    pub doc: usize,
}

impl Default for MinCounts {
    fn default() -> Self {
        MinCounts { aspect: 1, doc: 2 }
    }
}

/// Shared vocabulary over both corpora with one frequency threshold on the
/// combined counts.
pub fn build_vocab(aspect: &[AspectSample], docs: &[DocSample], min_count: usize) -> Vocabulary {
    build_vocab_with(aspect, docs, |_, _, total| total >= min_count.max(1))
}

/// Shared vocabulary with separate thresholds per corpus.
pub fn build_vocab_per_corpus(aspect: &[AspectSample], docs: &[DocSample], min: MinCounts) -> Vocabulary {
    build_vocab_with(aspect, docs, |a, d, _| {
        (a > 0 && a >= min.aspect.max(1)) || (d > 0 && d >= min.doc.max(1))
    })
}

fn build_vocab_with(
    aspect: &[AspectSample],
    docs: &[DocSample],
    keep: impl Fn(usize, usize, usize) -> bool,
) -> Vocabulary {
    let mut counts: HashMap<&str, (usize, usize)> = HashMap::new();
    for s in aspect {
        for t in &s.tokens {
            counts.entry(t).or_default().0 += 1;
        }
    }
    for d in docs {
        for t in &d.tokens {
            counts.entry(t).or_default().1 += 1;
        }
    }
    let mut kept: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|(t, (a, d))| *t != PAD && *t != UNK && keep(*a, *d, a + d))
        .map(|(t, (a, d))| (t, a + d))
        .collect();
    kept.sort_by(|x, y| y.1.cmp(&x.1).then_with(|| x.0.cmp(y.0)));
    Vocabulary::from_tokens(kept.into_iter().map(|(t, _)| t.to_string()))
        .expect("counted tokens are unique")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{AspectPolarity, DocPolarity};

    fn aspect(tokens: &[&str]) -> AspectSample {
        AspectSample {
            tokens: tokens.iter().map(|s| s.to_string()).collect(),
            target_lo: 1,
            target_hi: 1,
            label: AspectPolarity::Neutral,
        }
    }

    fn doc(tokens: &[&str]) -> DocSample {
        DocSample {
            tokens: tokens.iter().map(|s| s.to_string()).collect(),
            label: DocPolarity::Positive,
        }
    }

    #[test]
    fn single_shared_token() {
        let v = build_vocab(&[aspect(&["good"])], &[doc(&["good"])], 1);
        assert_eq!(v.len(), 3);
        assert_eq!(v.token(2), Some("good"));
        assert_eq!(v.id("good"), 2);
    }

    #[test]
    fn rare_tokens_map_to_unknown() {
        let v = build_vocab(&[aspect(&["good", "good", "rare"])], &[], 2);
        assert_eq!(v.id("rare"), Vocabulary::UNK_ID);
        assert_eq!(v.id("never-seen"), Vocabulary::UNK_ID);
        assert_eq!(v.id("good"), 2);
    }

    #[test]
    fn per_corpus_thresholds() {
        let v = build_vocab_per_corpus(
            &[aspect(&["once"])],
            &[doc(&["single", "twice", "twice"])],
            MinCounts::default(),
        );
        assert!(v.contains("once"));
        assert!(v.contains("twice"));
        assert!(!v.contains("single"));
    }

    #[test]
    fn save_load_round_trip() {
        let v = build_vocab(&[aspect(&["b", "a", "b"])], &[], 1);
        let f = tempfile::NamedTempFile::new().unwrap();
        v.save(f.path()).unwrap();
        assert_eq!(Vocabulary::load(f.path()).unwrap(), v);
    }
}
