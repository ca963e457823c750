//! Metric tokenization: lowercase word units with punctuation stripped.
//!
//! All n-gram, fragment and overlap computations run on these tokens. Raw
//! cased text is kept separately in [`crate::corpus::Document`] because the
//! extractive transformation substitutes verbatim sentence text.

use serde::{Deserialize, Serialize};
use std::fmt;

/// A lowercased word unit. Non-empty, never contains whitespace.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Token(String);

impl Token {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Splits `text` into lowercase tokens. Boundaries are any run of
/// non-alphanumeric characters; punctuation-only units vanish. Deterministic
/// across runs and platforms.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            for low in ch.to_lowercase() {
                current.push(low);
            }
        } else if !current.is_empty() {
            tokens.push(Token(std::mem::take(&mut current)));
        }
    }
    if !current.is_empty() {
        tokens.push(Token(current));
    }
    tokens
}

/// Joins tokens with single spaces; `tokenize(join(tokenize(x)))` equals
/// `tokenize(x)` for any input.
pub fn join_tokens(tokens: &[Token]) -> String {
    let mut out = String::new();
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(t.as_str());
    }
    out
}
