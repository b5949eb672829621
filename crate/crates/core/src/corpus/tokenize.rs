use std::ops::Range;

/// A token and the character range (in `char` units) it was cut from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub chars: Range<usize>,
}

/// Anything that is neither alphanumeric nor whitespace stands alone.
pub fn is_punctuation(c: char) -> bool {
    !c.is_alphanumeric() && !c.is_whitespace()
}

/// Lowercases, splits on whitespace, and emits every punctuation character
/// as its own token.
pub fn tokenize(text: &str) -> Vec<String> {
    tokenize_with_offsets(text).into_iter().map(|t| t.text).collect()
}

pub fn tokenize_with_offsets(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut start = 0;

    for (idx, c) in text.chars().enumerate() {
        if c.is_whitespace() || is_punctuation(c) {
            if !current.is_empty() {
                tokens.push(Token {
                    text: std::mem::take(&mut current),
                    chars: start..idx,
                });
            }
            if is_punctuation(c) {
                tokens.push(Token {
                    text: c.to_lowercase().collect(),
                    chars: idx..idx + 1,
                });
            }
        } else {
            if current.is_empty() {
                start = idx;
            }
            current.extend(c.to_lowercase());
        }
    }
    if !current.is_empty() {
        let end = text.chars().count();
        tokens.push(Token {
            text: current,
            chars: start..end,
        });
    }
    tokens
}
