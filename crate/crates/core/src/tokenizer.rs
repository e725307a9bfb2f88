//! Domain tokenizer for variant-bearing biomedical sentences.
//!
//! Three passes per whitespace/split-character chunk: split, exhaustive
//! trailing strip, then a single bracket strip. Characters removed by the
//! strip passes come back as one-character tokens so every offset stays
//! reconstructible.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    /// Character offset, inclusive.
    pub start: usize,
    /// Character offset, exclusive.
    pub end: usize,
}

impl Token {
    pub fn new(text: impl Into<String>, start: usize, end: usize) -> Self {
        Token {
            text: text.into(),
            start,
            end,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TokenizerConfig {
    /// Separators in addition to whitespace. Never emitted.
    pub split_chars: Vec<char>,
    /// Trailing characters peeled off a chunk and emitted on their own.
    pub strip_chars: Vec<char>,
    pub bracket_pairs: Vec<(char, char)>,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        TokenizerConfig {
            split_chars: vec![
                '"', '#', '&', '$', '_', '*', ';', '/', '\\', '~', '!', '?', '=', '{', '}',
            ],
            strip_chars: vec!['"', ',', '.', '\'', ':'],
            bracket_pairs: vec![('(', ')'), ('[', ']'), ('{', '}')],
        }
    }
}

impl TokenizerConfig {
    pub fn validate(&self) -> Result<()> {
        let offending = self
            .split_chars
            .iter()
            .chain(&self.strip_chars)
            .find(|c| c.is_alphanumeric());
        if let Some(c) = offending {
            return Err(Error::Config(format!(
                "tokenizer split/strip characters must not be alphanumeric (got {c:?})"
            )));
        }
        if self
            .bracket_pairs
            .iter()
            .any(|(o, c)| o.is_alphanumeric() || c.is_alphanumeric() || o.is_whitespace())
        {
            return Err(Error::Config(
                "tokenizer bracket pairs must be punctuation".into(),
            ));
        }
        Ok(())
    }

    fn is_split(&self, c: char) -> bool {
        c.is_whitespace() || self.split_chars.contains(&c)
    }

    fn is_strip(&self, c: char) -> bool {
        self.strip_chars.contains(&c)
    }
}

/// True iff the first and last characters form one of `pairs` around a
/// non-empty interior.
pub fn is_bracketed(token_text: &str, pairs: &[(char, char)]) -> bool {
    let mut chars = token_text.chars();
    let (Some(first), Some(last)) = (chars.next(), chars.next_back()) else {
        return false;
    };
    if chars.as_str().is_empty() {
        return false;
    }
    pairs.iter().any(|&(o, c)| o == first && c == last)
}

pub fn tokenize(text: &str, config: &TokenizerConfig) -> Vec<Token> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if config.is_split(chars[i]) {
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() && !config.is_split(chars[i]) {
            i += 1;
        }
        emit_chunk(&chars, start, i, config, &mut tokens);
    }
    tokens
}

fn emit_chunk(chars: &[char], start: usize, end: usize, config: &TokenizerConfig, out: &mut Vec<Token>) {
    let mut core_end = end;
    while core_end > start && config.is_strip(chars[core_end - 1]) {
        core_end -= 1;
    }

    let push = |out: &mut Vec<Token>, s: usize, e: usize| {
        out.push(Token::new(chars[s..e].iter().collect::<String>(), s, e));
    };

    if core_end > start {
        let core: String = chars[start..core_end].iter().collect();
        if is_bracketed(&core, &config.bracket_pairs) {
            push(out, start, start + 1);
            push(out, start + 1, core_end - 1);
            push(out, core_end - 1, core_end);
        } else {
            push(out, start, core_end);
        }
    }
    for k in core_end..end {
        push(out, k, k + 1);
    }
}
