//! Reader for the SemEval-2014 Task 4 aspect-term XML format.

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

use crate::corpus::tokenize::{tokenize_with_offsets, Token};
use crate::corpus::{AspectPolarity, AspectSample};
use crate::error::{AtnError, Result};

/// Aspect term whose character offsets matched no token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnalignedTerm {
    pub sentence_id: String,
    pub term: String,
    pub from: usize,
    pub to: usize,
}

#[derive(Debug, Clone, Default)]
pub struct ParseReport {
    pub samples: Vec<AspectSample>,
    pub conflicts_dropped: usize,
    pub unaligned: Vec<UnalignedTerm>,
}

/// Smallest contiguous token span (1-based, inclusive) overlapping the
/// character range `[char_from, char_to)` of `original_text`.
pub fn align_char_span(
    tokens: &[String],
    char_from: usize,
    char_to: usize,
    original_text: &str,
) -> Result<(usize, usize)> {
    let located = tokenize_with_offsets(original_text);
    let same = located.len() == tokens.len() && located.iter().zip(tokens).all(|(a, b)| &a.text == b);
    if !same {
        return Err(AtnError::arg("tokens were not produced from this text"));
    }
    align_offsets(&located, char_from, char_to)
}

fn align_offsets(tokens: &[Token], from: usize, to: usize) -> Result<(usize, usize)> {
    let mut span: Option<(usize, usize)> = None;
    for (i, t) in tokens.iter().enumerate() {
        if t.chars.start < to && t.chars.end > from {
            span = Some(match span {
                None => (i + 1, i + 1),
                Some((lo, _)) => (lo, i + 1),
            });
        }
    }
    span.ok_or(AtnError::Alignment { from, to })
}

#[derive(Default)]
struct PendingTerm {
    term: String,
    polarity: String,
    from: usize,
    to: usize,
}

#[derive(Default)]
struct PendingSentence {
    id: String,
    text: String,
    terms: Vec<PendingTerm>,
}

fn line_of(bytes: &[u8], pos: u64) -> usize {
    let end = (pos as usize).min(bytes.len());
    1 + bytes[..end].iter().filter(|b| **b == b'\n').count()
}

/// Parses a SemEval XML document. Conflict-labeled terms are dropped; terms
/// whose offsets match no token are skipped and listed in the report.
pub fn parse_aspect_xml(bytes: &[u8]) -> Result<ParseReport> {
    let mut reader = Reader::from_reader(bytes);
    reader.config_mut().check_end_names = true;

    let xml_err = |pos: u64, message: String| AtnError::Xml {
        line: line_of(bytes, pos),
        message,
    };

    let mut report = ParseReport::default();
    let mut sentence: Option<PendingSentence> = None;
    let mut in_text = false;
    let mut depth = 0usize;

    loop {
        let pos = reader.buffer_position();
        let event = reader
            .read_event()
            .map_err(|e| xml_err(reader.error_position(), e.to_string()))?;
        match event {
            Event::Start(e) => {
                depth += 1;
                match e.name().as_ref() {
                    b"sentence" => {
                        sentence = Some(PendingSentence {
                            id: attr(&e, "id").map_err(|m| xml_err(pos, m))?.unwrap_or_default(),
                            ..Default::default()
                        })
                    }
                    b"text" => in_text = true,
                    b"aspectTerm" => push_term(&e, sentence.as_mut()).map_err(|m| xml_err(pos, m))?,
                    _ => {}
                }
            }
            Event::Empty(e) => {
                if e.name().as_ref() == b"aspectTerm" {
                    push_term(&e, sentence.as_mut()).map_err(|m| xml_err(pos, m))?;
                }
            }
            Event::Text(t) => {
                if in_text {
                    let s = t.unescape().map_err(|e| xml_err(pos, e.to_string()))?;
                    if let Some(sent) = sentence.as_mut() {
                        sent.text.push_str(&s);
                    }
                }
            }
            Event::CData(t) => {
                if in_text {
                    if let Some(sent) = sentence.as_mut() {
                        sent.text.push_str(&String::from_utf8_lossy(&t));
                    }
                }
            }
            Event::End(e) => {
                depth = depth.saturating_sub(1);
                match e.name().as_ref() {
                    b"text" => in_text = false,
                    b"sentence" => {
                        if let Some(sent) = sentence.take() {
                            finish_sentence(sent, &mut report);
                        }
                    }
                    _ => {}
                }
            }
            Event::Eof => {
                if depth != 0 {
                    return Err(xml_err(bytes.len() as u64, "unexpected end of document".into()));
                }
                break;
            }
            _ => {}
        }
    }
    Ok(report)
}

fn attr(e: &BytesStart<'_>, name: &str) -> std::result::Result<Option<String>, String> {
    for a in e.attributes() {
        let a = a.map_err(|err| err.to_string())?;
        if a.key.as_ref() == name.as_bytes() {
            return a
                .unescape_value()
                .map(|v| Some(v.into_owned()))
                .map_err(|err| err.to_string());
        }
    }
    Ok(None)
}

fn push_term(e: &BytesStart<'_>, sentence: Option<&mut PendingSentence>) -> std::result::Result<(), String> {
    let sentence = sentence.ok_or("aspectTerm outside of a sentence")?;
    let required = |name: &str| attr(e, name)?.ok_or_else(|| format!("aspectTerm lacks '{name}'"));
    let offset = |name: &str| -> std::result::Result<usize, String> {
        let v = required(name)?;
        v.trim().parse().map_err(|_| format!("aspectTerm '{name}' is not an offset: {v:?}"))
    };
    let polarity = required("polarity")?;
    if !matches!(polarity.as_str(), "positive" | "neutral" | "negative" | "conflict") {
        return Err(format!("unknown polarity {polarity:?}"));
    }
    sentence.terms.push(PendingTerm {
        term: required("term")?,
        polarity,
        from: offset("from")?,
        to: offset("to")?,
    });
    Ok(())
}

fn finish_sentence(sent: PendingSentence, report: &mut ParseReport) {
    let located = tokenize_with_offsets(&sent.text);
    let tokens: Vec<String> = located.iter().map(|t| t.text.clone()).collect();
    for term in sent.terms {
        let label = match term.polarity.as_str() {
            "positive" => AspectPolarity::Positive,
            "neutral" => AspectPolarity::Neutral,
            "negative" => AspectPolarity::Negative,
            _ => {
                // "conflict"; anything else was rejected while parsing.
                report.conflicts_dropped += 1;
                continue;
            }
        };
        match align_offsets(&located, term.from, term.to) {
            Ok((lo, hi)) => report.samples.push(AspectSample {
                tokens: tokens.clone(),
                target_lo: lo,
                target_hi: hi,
                label,
            }),
            Err(_) => report.unaligned.push(UnalignedTerm {
                sentence_id: sent.id.clone(),
                term: term.term,
                from: term.from,
                to: term.to,
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        crate::corpus::tokenize(s)
    }

    #[test]
    fn single_token_target() {
        let text = "the service is dreadful";
        assert_eq!(align_char_span(&toks(text), 4, 11, text).unwrap(), (2, 2));
    }

    #[test]
    fn multiword_target() {
        let text = "I use it mostly for content creation ( Audio , video )";
        let from = text.find("content").unwrap();
        let to = from + "content creation".len();
        let (lo, hi) = align_char_span(&toks(text), from, to, text).unwrap();
        assert_eq!(hi - lo + 1, 2);
        assert_eq!(toks(text)[lo - 1], "content");
    }

    #[test]
    fn whitespace_only_span_fails() {
        let text = "good  food";
        assert!(matches!(
            align_char_span(&toks(text), 4, 6, text),
            Err(AtnError::Alignment { .. })
        ));
    }

    #[test]
    fn conflict_terms_dropped() {
        let xml = br#"<?xml version="1.0"?>
<sentences>
  <sentence id="1">
    <text>The food was good but the wait was long.</text>
    <aspectTerms>
      <aspectTerm term="food" polarity="conflict" from="4" to="8"/>
    </aspectTerms>
  </sentence>
</sentences>"#;
        let report = parse_aspect_xml(xml).unwrap();
        assert!(report.samples.is_empty());
        assert_eq!(report.conflicts_dropped, 1);
    }

    #[test]
    fn entities_and_offsets() {
        let xml = br#"<sentences><sentence id="7"><text>Fish &amp; chips were superb</text>
<aspectTerms><aspectTerm term="Fish &amp; chips" polarity="positive" from="0" to="12"/>
<aspectTerm term="nothing" polarity="negative" from="40" to="47"/></aspectTerms></sentence></sentences>"#;
        let report = parse_aspect_xml(xml).unwrap();
        assert_eq!(report.samples.len(), 1);
        let s = &report.samples[0];
        assert_eq!((s.target_lo, s.target_hi), (1, 3));
        assert_eq!(s.tokens[..3], ["fish", "&", "chips"]);
        assert_eq!(report.unaligned.len(), 1);
        assert_eq!(report.unaligned[0].sentence_id, "7");
    }

    #[test]
    fn malformed_xml_reports_line() {
        let xml = b"<sentences>\n<sentence id=\"1\">\n<text>hi</txt>\n</sentence>\n</sentences>";
        match parse_aspect_xml(xml) {
            Err(AtnError::Xml { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected xml error, got {other:?}"),
        }
        let truncated = b"<sentences>\n<sentence id=\"1\">\n<text>hi</text>\n";
        assert!(matches!(parse_aspect_xml(truncated), Err(AtnError::Xml { .. })));
    }
}
