//! Generated corpora where sentiment is carried by planted tokens.
//!
//! Documents mix filler words with a few sentiment words of the document's
//! polarity. Aspect sentences join two clauses, each naming a target and
//! (usually) one sentiment word; a target's label is the polarity of the
//! sentiment word in its own clause, which is always the nearest one.
//! Word vectors place sentiment words along a shared polarity direction.

use std::io::Write;
use std::path::Path;

use quick_xml::escape::escape;
use serde::{Deserialize, Serialize};

use crate::corpus::{AspectPolarity, AspectSample, DocPolarity, DocSample, EmbeddingMatrix, Vocabulary};
use crate::error::{AtnError, Result};
use crate::kernels::{RngState, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub positive_words: usize,
    pub negative_words: usize,
    pub fillers: usize,
    pub targets: usize,
    pub documents: usize,
    /// Sentence counts; each sentence yields two aspect samples.
    pub train_sentences: usize,
    pub dev_sentences: usize,
    pub test_sentences: usize,
    pub dim: usize,
    /// Length of the polarity component of sentiment word vectors.
    pub polarity_strength: f64,
    /// Half-width of the uniform noise on every word vector.
    pub noise: f64,
    /// Probability that a clause has no sentiment word (neutral target).
    pub neutral_rate: f64,
    /// Maximum filler words before a target and after a sentiment word.
    pub padding: usize,
    /// Maximum filler words between a target and its sentiment word.
    pub gap: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            seed: 7,
            positive_words: 30,
            negative_words: 30,
            fillers: 150,
            targets: 20,
            documents: 5000,
            train_sentences: 100,
            dev_sentences: 30,
            test_sentences: 300,
            dim: 16,
            polarity_strength: 0.6,
            noise: 0.5,
            neutral_rate: 0.2,
            padding: 4,
            gap: 3,
        }
    }
}

/// An aspect term inside an [`AnnotatedSentence`] (1-based inclusive span).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Term {
    pub lo: usize,
    pub hi: usize,
    pub label: AspectPolarity,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotatedSentence {
    pub tokens: Vec<String>,
    pub terms: Vec<Term>,
}

impl AnnotatedSentence {
    pub fn samples(&self) -> Result<Vec<AspectSample>> {
        self.terms
            .iter()
            .map(|t| AspectSample::new(self.tokens.clone(), t.lo, t.hi, t.label))
            .collect()
    }
}

pub fn flatten(sentences: &[AnnotatedSentence]) -> Result<Vec<AspectSample>> {
    Ok(sentences.iter().map(|s| s.samples()).collect::<Result<Vec<_>>>()?.concat())
}

pub struct SyntheticCorpus {
    pub vocab: Vocabulary,
    /// Frozen word vectors, one row per vocabulary id.
    pub embedding: EmbeddingMatrix,
    pub documents: Vec<DocSample>,
    pub train: Vec<AnnotatedSentence>,
    pub dev: Vec<AnnotatedSentence>,
    pub test: Vec<AnnotatedSentence>,
}

struct Lexicon {
    positive: Vec<String>,
    negative: Vec<String>,
    fillers: Vec<String>,
    targets: Vec<String>,
}

impl Lexicon {
    fn new(c: &SyntheticConfig) -> Self {
        let words = |prefix: &str, n: usize| (0..n).map(|i| format!("{prefix}{i}")).collect::<Vec<_>>();
        Lexicon {
            positive: words("pos", c.positive_words),
            negative: words("neg", c.negative_words),
            fillers: words("w", c.fillers),
            targets: words("aspect", c.targets),
        }
    }

    fn pick<'a>(list: &'a [String], rng: &mut RngState) -> &'a str {
        &list[rng.below(list.len())]
    }

    fn sentiment(&self, positive: bool, rng: &mut RngState) -> &str {
        Self::pick(if positive { &self.positive } else { &self.negative }, rng)
    }

    fn fill(&self, out: &mut Vec<String>, n: usize, rng: &mut RngState) {
        for _ in 0..n {
            out.push(Self::pick(&self.fillers, rng).to_string());
        }
    }
}

impl SyntheticConfig {
    fn validate(&self) -> Result<()> {
        if self.positive_words == 0 || self.negative_words == 0 || self.fillers == 0 || self.targets == 0 {
            return Err(AtnError::Config("synthetic word lists must be nonempty".into()));
        }
        if self.dim == 0 || !(0.0..1.0).contains(&self.neutral_rate) {
            return Err(AtnError::Config("synthetic dim must be positive and neutral_rate in [0, 1)".into()));
        }
        Ok(())
    }
}

fn document(lex: &Lexicon, rng: &mut RngState) -> DocSample {
    let positive = rng.below(2) == 0;
    let len = 20 + rng.below(21);
    let mut tokens = Vec::with_capacity(len);
    lex.fill(&mut tokens, len, rng);
    let planted = 1 + rng.below(3);
    for _ in 0..planted {
        let at = rng.below(len);
        tokens[at] = lex.sentiment(positive, rng).to_string();
    }
    if rng.below(2) == 0 {
        let at = rng.below(len);
        tokens[at] = Lexicon::pick(&lex.targets, rng).to_string();
    }
    DocSample {
        tokens,
        label: if positive { DocPolarity::Positive } else { DocPolarity::Negative },
    }
}

fn clause_label(rng: &mut RngState, neutral_rate: f64) -> AspectPolarity {
    if rng.unit() < neutral_rate {
        AspectPolarity::Neutral
    } else if rng.below(2) == 0 {
        AspectPolarity::Positive
    } else {
        AspectPolarity::Negative
    }
}

/// `lead` fillers, target, `gap` fillers, sentiment word (unless neutral), `tail` fillers.
fn clause(lex: &Lexicon, label: AspectPolarity, lead: usize, gap: usize, tail: usize, rng: &mut RngState, out: &mut Vec<String>) -> usize {
    lex.fill(out, lead, rng);
    out.push(Lexicon::pick(&lex.targets, rng).to_string());
    let target = out.len();
    lex.fill(out, gap, rng);
    match label {
        AspectPolarity::Positive => out.push(lex.sentiment(true, rng).to_string()),
        AspectPolarity::Negative => out.push(lex.sentiment(false, rng).to_string()),
        AspectPolarity::Neutral => lex.fill(out, 1, rng),
    }
    lex.fill(out, tail, rng);
    target
}

fn sentence(lex: &Lexicon, config: &SyntheticConfig, rng: &mut RngState) -> AnnotatedSentence {
    let neutral_rate = config.neutral_rate;
    let first = clause_label(rng, neutral_rate);
    // The second clause usually disagrees with the first.
    let second = match first {
        AspectPolarity::Positive if rng.unit() < 0.7 => AspectPolarity::Negative,
        AspectPolarity::Negative if rng.unit() < 0.7 => AspectPolarity::Positive,
        _ => clause_label(rng, neutral_rate),
    };
    let mut tokens = Vec::new();
    let pad = config.padding + 1;
    let (lead1, gap1, tail1) = (rng.below(pad), rng.below(config.gap + 1), rng.below(pad));
    let t1 = clause(lex, first, lead1, gap1, tail1, rng, &mut tokens);
    tokens.push("and".to_string());
    let lead2 = rng.below(pad);
    // Keeps the own-clause sentiment word strictly nearer than the other one.
    let gap2 = rng.below((config.gap + 1).min(tail1 + lead2 + 1));
    let t2 = clause(lex, second, lead2, gap2, rng.below(pad), rng, &mut tokens);
    AnnotatedSentence {
        tokens,
        terms: vec![
            Term {
                lo: t1,
                hi: t1,
                label: first,
            },
            Term {
                lo: t2,
                hi: t2,
                label: second,
            },
        ],
    }
}

fn word_vectors(vocab: &Vocabulary, config: &SyntheticConfig, rng: &mut RngState) -> Result<EmbeddingMatrix> {
    let mut direction: Vec<f64> = (0..config.dim).map(|_| rng.uniform(-1.0, 1.0)).collect();
    let norm = direction.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    direction.iter_mut().for_each(|x| *x /= norm);
    let mut values = Tensor::zeros(&[vocab.len(), config.dim]);
    for id in 1..vocab.len() {
        let token = vocab.token(id).unwrap_or_default();
        let sign = if token.starts_with("pos") {
            1.0
        } else if token.starts_with("neg") {
            -1.0
        } else {
            0.0
        };
        for (v, d) in values.row_mut(id).iter_mut().zip(&direction) {
            *v = rng.uniform(-config.noise, config.noise) + sign * config.polarity_strength * d;
        }
    }
    EmbeddingMatrix::new(values, true)
}

/// Generates the full corpus deterministically from `config.seed`.
pub fn generate(config: &SyntheticConfig) -> Result<SyntheticCorpus> {
    config.validate()?;
    let mut rng = RngState::new(config.seed);
    let lex = Lexicon::new(config);
    let vocab = Vocabulary::from_tokens(
        lex.positive
            .iter()
            .chain(&lex.negative)
            .chain(&lex.fillers)
            .chain(&lex.targets)
            .cloned()
            .chain(std::iter::once("and".to_string())),
    )?;
    let embedding = word_vectors(&vocab, config, &mut rng)?;
    let documents = (0..config.documents).map(|_| document(&lex, &mut rng)).collect();
    let mut sentences = |n: usize| (0..n).map(|_| sentence(&lex, config, &mut rng)).collect::<Vec<_>>();
    let train = sentences(config.train_sentences);
    let dev = sentences(config.dev_sentences);
    let test = sentences(config.test_sentences);
    Ok(SyntheticCorpus {
        vocab,
        embedding,
        documents,
        train,
        dev,
        test,
    })
}

/// Writes sentences in the SemEval aspect-term XML layout, tokens joined by
/// single spaces.
pub fn write_aspect_xml(path: &Path, sentences: &[AnnotatedSentence]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "<?xml version=\"1.0\" encoding=\"UTF-8\"?>")?;
    writeln!(out, "<sentences>")?;
    for (n, s) in sentences.iter().enumerate() {
        let mut starts = Vec::with_capacity(s.tokens.len());
        let mut offset = 0;
        for t in &s.tokens {
            starts.push(offset);
            offset += t.chars().count() + 1;
        }
        let text = s.tokens.join(" ");
        writeln!(out, "  <sentence id=\"{}\">", n + 1)?;
        writeln!(out, "    <text>{}</text>", escape(text.as_str()))?;
        writeln!(out, "    <aspectTerms>")?;
        for t in &s.terms {
            let from = starts[t.lo - 1];
            let to = starts[t.hi - 1] + s.tokens[t.hi - 1].chars().count();
            let term = s.tokens[t.lo - 1..t.hi].join(" ");
            writeln!(
                out,
                "      <aspectTerm term=\"{}\" polarity=\"{}\" from=\"{from}\" to=\"{to}\"/>",
                escape(term.as_str()),
                t.label.name()
            )?;
        }
        writeln!(out, "    </aspectTerms>")?;
        writeln!(out, "  </sentence>")?;
    }
    writeln!(out, "</sentences>")?;
    out.flush()?;
    Ok(())
}

/// One document per line, led by its label.
pub fn write_doc_corpus(path: &Path, docs: &[DocSample]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for d in docs {
        let label = match d.label {
            DocPolarity::Positive => "positive",
            DocPolarity::Negative => "negative",
        };
        writeln!(out, "{label} {}", d.tokens.join(" "))?;
    }
    out.flush()?;
    Ok(())
}

/// Text vectors: `token v1 ... vd` per line, reserved entries omitted.
pub fn write_word_vectors(path: &Path, vocab: &Vocabulary, embedding: &EmbeddingMatrix) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for (id, token) in vocab.tokens().iter().enumerate().skip(2) {
        write!(out, "{token}")?;
        for v in embedding.values().row(id) {
            write!(out, " {v:e}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SyntheticConfig {
        SyntheticConfig {
            documents: 50,
            train_sentences: 40,
            dev_sentences: 5,
            test_sentences: 5,
            ..Default::default()
        }
    }

    #[test]
    fn own_clause_sentiment_is_nearest() {
        let c = generate(&small()).unwrap();
        for s in &c.train {
            for t in &s.terms {
                let sentiment: Vec<usize> = s
                    .tokens
                    .iter()
                    .enumerate()
                    .filter(|(_, w)| w.starts_with("pos") || w.starts_with("neg"))
                    .map(|(i, _)| i + 1)
                    .collect();
                if t.label == AspectPolarity::Neutral {
                    continue;
                }
                let nearest = sentiment.iter().min_by_key(|i| i.abs_diff(t.lo)).unwrap();
                let word = &s.tokens[nearest - 1];
                let expect = if word.starts_with("pos") {
                    AspectPolarity::Positive
                } else {
                    AspectPolarity::Negative
                };
                assert_eq!(t.label, expect, "{:?}", s.tokens);
                assert_eq!(sentiment.iter().filter(|i| i.abs_diff(t.lo) == nearest.abs_diff(t.lo)).count(), 1);
            }
        }
    }

    #[test]
    fn deterministic_and_documents_carry_their_label() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.embedding.values(), b.embedding.values());
        for d in &a.documents {
            let prefix = if d.label == DocPolarity::Positive { "neg" } else { "pos" };
            assert!(d.tokens.iter().all(|t| !t.starts_with(prefix)));
            assert!(d.tokens.iter().all(|t| a.vocab.contains(t)));
        }
        assert!(a.embedding.is_frozen());
    }

    #[test]
    fn xml_round_trip() {
        let c = generate(&small()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.xml");
        write_aspect_xml(&path, &c.train).unwrap();
        let parsed = crate::corpus::load_aspect_file(&path).unwrap();
        assert_eq!(parsed.samples, flatten(&c.train).unwrap());
    }
}
