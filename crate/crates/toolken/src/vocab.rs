//! Word-level vocabulary and tokenizer.
//!
//! Tokenization is whitespace-plus-punctuation: identifiers (letters and
//! underscores) and number literals (integer, decimal, `a/b` fraction) are
//! single tokens, runs of `#` form one token (the answer marker), and every
//! other non-space character stands alone.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const SEP: &str = "<sep>";
pub const ANSWER_MARKER: &str = "####";

pub type TokenId = u32;

#[derive(Debug, Error, PartialEq, Eq, Clone)]
pub enum VocabError {
    #[error("duplicate token {0:?}")]
    Duplicate(String),
    #[error("empty token surface")]
    Empty,
    #[error("unknown token {0:?}")]
    Unknown(String),
    #[error("eos index {eos} out of range for vocabulary of size {size}")]
    EosOutOfRange { eos: usize, size: usize },
}

/// Ordered set of distinct token surfaces plus the EOS index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocab {
    tokens: Vec<String>,
    eos_id: TokenId,
    #[serde(skip)]
    index: HashMap<String, TokenId>,
}

impl Vocab {
    pub fn new<I, S>(tokens: I, eos: &str) -> Result<Self, VocabError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut list = Vec::new();
        let mut index = HashMap::new();
        for tok in tokens {
            let tok: String = tok.into();
            if tok.is_empty() {
                return Err(VocabError::Empty);
            }
            if index.contains_key(&tok) {
                return Err(VocabError::Duplicate(tok));
            }
            index.insert(tok.clone(), list.len() as TokenId);
            list.push(tok);
        }
        let eos_id = *index
            .get(eos)
            .ok_or_else(|| VocabError::Unknown(eos.to_string()))?;
        Ok(Self {
            tokens: list,
            eos_id,
            index,
        })
    }

    /// Rebuild the lookup index after deserialization.
    pub fn reindex(&mut self) -> Result<(), VocabError> {
        self.index = self
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as TokenId))
            .collect();
        if self.index.len() != self.tokens.len() {
            return Err(VocabError::Duplicate("(post-deserialize)".into()));
        }
        if self.eos_id as usize >= self.tokens.len() {
            return Err(VocabError::EosOutOfRange {
                eos: self.eos_id as usize,
                size: self.tokens.len(),
            });
        }
        Ok(())
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn eos_id(&self) -> TokenId {
        self.eos_id
    }

    pub fn id(&self, surface: &str) -> Option<TokenId> {
        self.index.get(surface).copied()
    }

    pub fn require_id(&self, surface: &str) -> Result<TokenId, VocabError> {
        self.id(surface)
            .ok_or_else(|| VocabError::Unknown(surface.to_string()))
    }

    pub fn token(&self, id: TokenId) -> &str {
        &self.tokens[id as usize]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Tokenize text and map every piece to an id; unknown pieces are errors.
    pub fn encode_text(&self, text: &str) -> Result<Vec<TokenId>, VocabError> {
        tokenize(text).into_iter().map(|t| self.require_id(&t)).collect()
    }
}

/// Split text into word, number, `#`-run, and single-character tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    const SPECIALS: [&str; 3] = [BOS, EOS, SEP];
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    'outer: while i < chars.len() {
        let c = chars[i];
        // Marker tokens are atomic despite their punctuation.
        if c == '<' {
            for special in SPECIALS {
                let n = special.chars().count();
                if i + n <= chars.len() && chars[i..i + n].iter().collect::<String>() == special {
                    out.push(special.to_string());
                    i += n;
                    continue 'outer;
                }
            }
        }
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphabetic() || chars[i] == '_') {
                i += 1;
            }
            out.push(chars[start..i].iter().collect());
        } else if c.is_ascii_digit() {
            out.push(munch_number(&chars, &mut i));
        } else if c == '#' {
            let start = i;
            while i < chars.len() && chars[i] == '#' {
                i += 1;
            }
            out.push(chars[start..i].iter().collect());
        } else {
            out.push(c.to_string());
            i += 1;
        }
    }
    out
}

fn munch_number(chars: &[char], i: &mut usize) -> String {
    let start = *i;
    while *i < chars.len() && chars[*i].is_ascii_digit() {
        *i += 1;
    }
    // Optional decimal part.
    if *i + 1 < chars.len() && chars[*i] == '.' && chars[*i + 1].is_ascii_digit() {
        *i += 1;
        while *i < chars.len() && chars[*i].is_ascii_digit() {
            *i += 1;
        }
    }
    // Optional fraction part.
    if *i + 1 < chars.len() && chars[*i] == '/' && chars[*i + 1].is_ascii_digit() {
        *i += 1;
        while *i < chars.len() && chars[*i].is_ascii_digit() {
            *i += 1;
        }
    }
    chars[start..*i].iter().collect()
}
