//! Text normalization, tokenization, n-grams and bag-of-words vectors.
//!
//! A token is a maximal run of Unicode letters or digits after lowercasing;
//! every other character is a separator. No stemming is applied.

use std::borrow::Borrow;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::ops::Deref;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{read_file, Error, Result};

/// A lowercase, non-empty run of letters and/or digits.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct Token(String);

impl Token {
    /// Accepts `s` only if it is already a single valid token.
    pub fn new(s: impl Into<String>) -> Option<Token> {
        let s = s.into();
        if is_token(&s) {
            Some(Token(s))
        } else {
            None
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_numeric(&self) -> bool {
        self.0.chars().all(char::is_numeric)
    }
}

fn is_token(s: &str) -> bool {
    !s.is_empty() && s.chars().all(char::is_alphanumeric) && s.to_lowercase() == s
}

impl<'de> Deserialize<'de> for Token {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Token::new(s.clone())
            .ok_or_else(|| serde::de::Error::custom(format!("{s:?} is not a valid token")))
    }
}

impl Deref for Token {
    type Target = str;
    fn deref(&self) -> &str {
        &self.0
    }
}

impl Borrow<str> for Token {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl AsRef<str> for Token {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Lowercases, turns every non-alphanumeric run into a single space and trims.
pub fn normalize(text: &str) -> String {
    let lower = text.to_lowercase();
    let mut out = String::with_capacity(lower.len());
    for piece in lower.split(|c: char| !c.is_alphanumeric()) {
        if piece.is_empty() {
            continue;
        }
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(piece);
    }
    out
}

pub fn tokenize(text: &str) -> Vec<Token> {
    normalize(text)
        .split(' ')
        .filter(|p| !p.is_empty())
        .map(|p| Token(p.to_owned()))
        .collect()
}

pub fn join_tokens(tokens: &[Token]) -> String {
    let parts: Vec<&str> = tokens.iter().map(Token::as_str).collect();
    parts.join(" ")
}

/// Contiguous windows of length `n`, in order.
pub fn ngrams(tokens: &[Token], n: usize) -> Result<Vec<&[Token]>> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "n-gram length must be at least 1".into(),
        ));
    }
    Ok(tokens.windows(n).collect())
}

/// True when `needle` occurs in `haystack` as a contiguous token run.
pub fn contains_phrase(haystack: &[Token], needle: &[Token]) -> bool {
    !needle.is_empty() && haystack.windows(needle.len()).any(|w| w == needle)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    terms: Vec<Token>,
    index: HashMap<Token, usize>,
}

impl Vocabulary {
    /// Builds from an explicit term list; duplicates are rejected.
    pub fn from_terms(terms: Vec<Token>) -> Result<Self> {
        let mut index = HashMap::with_capacity(terms.len());
        for (i, t) in terms.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Validation(format!(
                    "duplicate vocabulary term {t:?}"
                )));
            }
        }
        Ok(Vocabulary { terms, index })
    }

    pub fn terms(&self) -> &[Token] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }
}

/// Keeps tokens whose corpus count reaches `max(min_count, 1)`, ordered by
/// first occurrence.
pub fn build_vocabulary<D: AsRef<[Token]>>(docs: &[D], min_count: usize) -> Vocabulary {
    let floor = min_count.max(1);
    let mut counts: HashMap<&Token, usize> = HashMap::new();
    let mut order: Vec<&Token> = Vec::new();
    for doc in docs {
        for t in doc.as_ref() {
            let c = counts.entry(t).or_insert(0);
            if *c == 0 {
                order.push(t);
            }
            *c += 1;
        }
    }
    let terms = order
        .into_iter()
        .filter(|t| counts[t] >= floor)
        .cloned()
        .collect();
    Vocabulary::from_terms(terms).expect("first-occurrence order has no duplicates")
}

/// Sparse term counts over a [`Vocabulary`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BowVector {
    counts: BTreeMap<usize, u32>,
}

impl BowVector {
    pub fn counts(&self) -> &BTreeMap<usize, u32> {
        &self.counts
    }

    pub fn get(&self, index: usize) -> u32 {
        self.counts.get(&index).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.counts.values().map(|&c| u64::from(c)).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, u32)> + '_ {
        self.counts.iter().map(|(&i, &c)| (i, c))
    }
}

pub fn vectorize(tokens: &[Token], vocab: &Vocabulary) -> BowVector {
    let mut counts = BTreeMap::new();
    for t in tokens {
        if let Some(i) = vocab.index_of(t) {
            *counts.entry(i).or_insert(0) += 1;
        }
    }
    BowVector { counts }
}

/// Optional stop-word list applied before vectorization and query building.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StopWords(HashSet<Token>);

impl StopWords {
    pub fn none() -> Self {
        StopWords::default()
    }

    /// One token per line; blank lines and lines starting with `#` are skipped.
    pub fn parse(text: &str) -> Self {
        let set = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .flat_map(tokenize)
            .collect();
        StopWords(set)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(Self::parse(&read_file(path)?))
    }

    pub fn contains(&self, token: &str) -> bool {
        self.0.contains(token)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn filter(&self, tokens: Vec<Token>) -> Vec<Token> {
        if self.0.is_empty() {
            return tokens;
        }
        tokens.into_iter().filter(|t| !self.contains(t)).collect()
    }
}

#[cfg(test)]
pub(crate) fn toks(words: &[&str]) -> Vec<Token> {
    words.iter().map(|w| Token::new(*w).unwrap()).collect()
}
