//! Vocabulary construction and binary token activations for queries.
//!
//! Normalization: lowercase, replace the 32 ASCII punctuation characters with
//! spaces, split on whitespace. The vocabulary is the K most frequent
//! training words (ties at the cutoff broken lexicographically) plus the
//! literal `<UKN>` token appended last; any out-of-vocabulary query word
//! activates `<UKN>`.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// The literal out-of-vocabulary token. Always the last vocabulary entry.
pub const UNKNOWN_TOKEN: &str = "<UKN>";

/// Lowercases, strips ASCII punctuation, and splits a query into words.
pub fn normalize(query: &str) -> Vec<String> {
    query
        .to_lowercase()
        .chars()
        .map(|c| if c.is_ascii_punctuation() { ' ' } else { c })
        .collect::<String>()
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Clone)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    fn from_tokens(tokens: Vec<String>) -> Vocabulary {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary { tokens, index }
    }

    /// Builds the vocabulary from a training corpus: the K most frequent
    /// normalized words (count descending, then lexicographic), plus `<UKN>`.
    pub fn build<'a, I: IntoIterator<Item = &'a str>>(queries: I, k: usize) -> Result<Vocabulary> {
        if k == 0 {
            return Err(Error::InvalidInput("vocabulary size must be >= 1".into()));
        }
        let mut counts: HashMap<String, u64> = HashMap::new();
        let mut any = false;
        for q in queries {
            any = true;
            for w in normalize(q) {
                *counts.entry(w).or_insert(0) += 1;
            }
        }
        if !any {
            return Err(Error::InvalidInput("empty training corpus".into()));
        }
        let mut ranked: Vec<(String, u64)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let mut tokens: Vec<String> = ranked.into_iter().take(k).map(|(w, _)| w).collect();
        tokens.push(UNKNOWN_TOKEN.to_string());
        Ok(Vocabulary::from_tokens(tokens))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token(&self, idx: usize) -> &str {
        &self.tokens[idx]
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn unknown_index(&self) -> usize {
        self.tokens.len() - 1
    }

    /// Binary activation vector: bit s is set iff word s occurs in the query;
    /// any out-of-vocabulary word sets the `<UKN>` bit. The empty query
    /// activates nothing.
    pub fn tokenize(&self, query: &str) -> TokenActivations {
        let mut bits = vec![false; self.tokens.len()];
        for word in normalize(query) {
            match self.index.get(&word) {
                Some(&i) => bits[i] = true,
                None => bits[self.unknown_index()] = true,
            }
        }
        TokenActivations { bits }
    }

    /// One token per line, `<UKN>` last.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.tokens.join("\n");
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Vocabulary> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let tokens: Vec<String> = text.lines().map(str::to_string).collect();
        Vocabulary::from_parts(tokens)
    }

    /// Rebuilds a vocabulary from an explicit token list, validating the
    /// `<UKN>`-last convention.
    pub fn from_parts(tokens: Vec<String>) -> Result<Vocabulary> {
        if tokens.is_empty() {
            return Err(Error::InvalidInput("empty vocabulary".into()));
        }
        if tokens.last().map(String::as_str) != Some(UNKNOWN_TOKEN) {
            return Err(Error::InvalidInput(format!(
                "vocabulary must end with {UNKNOWN_TOKEN}"
            )));
        }
        if tokens[..tokens.len() - 1]
            .iter()
            .any(|t| t == UNKNOWN_TOKEN)
        {
            return Err(Error::InvalidInput(format!(
                "{UNKNOWN_TOKEN} must appear exactly once"
            )));
        }
        Ok(Vocabulary::from_tokens(tokens))
    }
}

/// Bit per vocabulary token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenActivations {
    bits: Vec<bool>,
}

impl TokenActivations {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn get(&self, idx: usize) -> bool {
        self.bits[idx]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn active_indices(&self) -> Vec<usize> {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn build_keeps_most_frequent() {
        let v = Vocabulary::build(["a dog", "a cat", "a dog runs"], 2).unwrap();
        assert_eq!(v.tokens(), &["a", "dog", UNKNOWN_TOKEN]);
    }

    #[test]
    fn build_with_large_k_keeps_everything() {
        let v = Vocabulary::build(["a dog", "a cat", "a dog runs"], 100).unwrap();
        assert_eq!(v.len(), 5); // a, dog, cat, runs, <UKN>
        assert_eq!(v.token(v.unknown_index()), UNKNOWN_TOKEN);
    }

    #[test]
    fn cutoff_tie_breaks_lexicographically() {
        // counts: a:3, dog:2, cat:1, runs:1; K=3 keeps "cat" over "runs"
        let v = Vocabulary::build(["a dog", "a cat", "a dog runs"], 3).unwrap();
        assert_eq!(v.tokens(), &["a", "dog", "cat", UNKNOWN_TOKEN]);
    }

    #[test]
    fn build_rejects_empty_corpus() {
        assert!(Vocabulary::build([], 3).is_err());
    }

    #[test]
    fn tokenize_is_case_and_punctuation_insensitive() {
        let v = Vocabulary::build(["a dog"], 5).unwrap();
        let t = v.tokenize("A Dog!");
        assert!(t.get(v.index_of("a").unwrap()));
        assert!(t.get(v.index_of("dog").unwrap()));
        assert!(!t.get(v.unknown_index()));
    }

    #[test]
    fn unknown_word_sets_ukn_bit() {
        let v = Vocabulary::build(["a dog"], 5).unwrap();
        let t = v.tokenize("zebra");
        let active = t.active_indices();
        assert_eq!(active, vec![v.unknown_index()]);
    }

    #[test]
    fn empty_query_activates_nothing() {
        let v = Vocabulary::build(["a dog"], 5).unwrap();
        assert!(v.tokenize("").active_indices().is_empty());
        assert!(v.tokenize("  ,,, !!").active_indices().is_empty());
    }

    #[test]
    fn duplicate_words_count_once_for_activation() {
        let v = Vocabulary::build(["dog dog dog"], 5).unwrap();
        let t = v.tokenize("dog dog");
        assert_eq!(t.active_indices().len(), 1);
    }

    #[test]
    fn save_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        let v = Vocabulary::build(["a dog runs fast"], 3).unwrap();
        v.save(&path).unwrap();
        let back = Vocabulary::load(&path).unwrap();
        assert_eq!(back.tokens(), v.tokens());
    }

    #[test]
    fn load_rejects_missing_ukn() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        std::fs::write(&path, "a\ndog\n").unwrap();
        assert!(Vocabulary::load(&path).is_err());
    }
}
