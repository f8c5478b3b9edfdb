//! Word-level vocabulary and tokenization.

use std::collections::HashMap;
use std::path::Path;

use ogrg_synth::grammar::{lexicon, normalize};

use crate::error::{CoreError, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
const PAD_TOKEN: &str = "<pad>";
const UNK_TOKEN: &str = "<unk>";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

/// Token ids padded to a fixed length, with `mask[j]` marking real tokens.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Tokens {
    pub ids: Vec<usize>,
    pub mask: Vec<bool>,
}

impl Vocab {
    /// Builds a vocabulary from `<pad>`, `<unk>` and the sorted distinct words of `texts`.
    pub fn from_corpus<S: AsRef<str>>(texts: impl IntoIterator<Item = S>) -> Self {
        let mut words: Vec<String> = texts.into_iter().flat_map(|t| normalize(t.as_ref())).collect();
        words.sort();
        words.dedup();
        Self::from_words(words)
    }

    /// Every word the scene grammar can produce.
    pub fn synthetic() -> Self {
        Self::from_corpus(lexicon())
    }

    fn from_words(words: Vec<String>) -> Self {
        let mut tokens = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
        tokens.extend(words.into_iter().filter(|w| w != PAD_TOKEN && w != UNK_TOKEN));
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocab { tokens, index }
    }

    /// Parses the one-token-per-line file format.
    pub fn from_lines(text: &str) -> Result<Self> {
        let tokens: Vec<String> = text.lines().map(str::to_string).collect();
        if tokens.len() < 2 || tokens[PAD] != PAD_TOKEN || tokens[UNK] != UNK_TOKEN {
            return Err(CoreError::input("vocabulary must start with <pad> and <unk>"));
        }
        let mut index = HashMap::new();
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || index.insert(t.clone(), i).is_some() {
                return Err(CoreError::input(format!("vocabulary line {}: empty or duplicate token", i + 1)));
            }
        }
        Ok(Vocab { tokens, index })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_lines(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.tokens.join("\n");
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    /// Lowercases, strips punctuation, splits on whitespace, then truncates or
    /// pads to `max_len`.
    pub fn tokenize(&self, text: &str, max_len: usize) -> Result<Tokens> {
        let words = normalize(text);
        if words.is_empty() {
            return Err(CoreError::input(format!("expression {text:?} has no words")));
        }
        let mut ids: Vec<usize> = words.iter().take(max_len).map(|w| self.id(w)).collect();
        let n = ids.len();
        ids.resize(max_len, PAD);
        let mask = (0..max_len).map(|j| j < n).collect();
        Ok(Tokens { ids, mask })
    }

    /// Space-joined real tokens, for debugging.
    pub fn detokenize(&self, tokens: &Tokens) -> String {
        tokens
            .ids
            .iter()
            .zip(&tokens.mask)
            .filter(|(_, &m)| m)
            .map(|(&id, _)| self.token(id).unwrap_or(UNK_TOKEN))
            .collect::<Vec<_>>()
            .join(" ")
    }
}
